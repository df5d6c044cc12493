#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "fedldr/tensor.hpp"

namespace fedldr::metrics {

using num::Tensor;

struct MetricReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  double corr = 0.0;
  std::size_t mape_masked = 0;  // entries skipped because |target| < epsilon
};

namespace detail {
inline void check_pair(const Tensor& pred, const Tensor& target, const std::string& op) {
  if (!pred.same_shape(target))
    throw ContractError(op + ": shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
  if (pred.size() == 0) throw ContractError(op + ": empty input");
}
}  // namespace detail

inline double mae(const Tensor& pred, const Tensor& target) {
  detail::check_pair(pred, target, "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
  return sum / static_cast<double>(pred.size());
}

inline double rmse(const Tensor& pred, const Tensor& target) {
  detail::check_pair(pred, target, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

/// Relative error averaged over entries whose target magnitude clears the
/// mask threshold; near-zero targets would otherwise blow the mean up.
inline double mape(const Tensor& pred, const Tensor& target, double epsilon = 1e-3,
                   std::size_t* masked_out = nullptr) {
  detail::check_pair(pred, target, "mape");
  double sum = 0.0;
  std::size_t used = 0, masked = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(target[i]) < epsilon) {
      ++masked;
      continue;
    }
    sum += std::abs(pred[i] - target[i]) / std::abs(target[i]);
    ++used;
  }
  if (masked_out) *masked_out = masked;
  if (used == 0) throw MetricError("mape: every target entry is below the mask threshold");
  return sum / static_cast<double>(used);
}

inline double pearson_corr(const Tensor& pred, const Tensor& target) {
  detail::check_pair(pred, target, "pearson_corr");
  const auto n = static_cast<double>(pred.size());
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += target[i];
  }
  mp /= n;
  mt /= n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = pred[i] - mp, b = target[i] - mt;
    cov += a * b;
    vp += a * a;
    vt += b * b;
  }
  if (vp == 0.0 || vt == 0.0) throw MetricError("pearson_corr: zero-variance series");
  return cov / std::sqrt(vp * vt);
}

inline MetricReport evaluate(const Tensor& pred, const Tensor& target) {
  MetricReport r;
  r.mae = mae(pred, target);
  r.rmse = rmse(pred, target);
  r.mape = mape(pred, target, 1e-3, &r.mape_masked);
  r.corr = pearson_corr(pred, target);
  return r;
}

}  // namespace fedldr::metrics
