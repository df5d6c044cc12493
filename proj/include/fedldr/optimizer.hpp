#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fedldr/model.hpp"
#include "fedldr/tensor.hpp"

namespace fedldr::train {

using num::Tensor;

/// Adaptive-moment accumulators, one pair per parameter block, plus the step
/// counter used for bias correction.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long t = 0;

  static AdamState like(const std::vector<const Tensor*>& blocks) {
    AdamState s;
    for (const Tensor* b : blocks) {
      s.m.push_back(num::Tensor::zeros_like(*b));
      s.v.push_back(num::Tensor::zeros_like(*b));
    }
    return s;
  }
};

/// Scales all gradients in place so their joint L2 norm does not exceed
/// max_norm. Returns the norm before clipping.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) sq += num::sum_squares(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.data()) x *= scale;
  }
  return norm;
}

/// One bias-corrected adaptive-moment step applied elementwise to every
/// block. Zero gradient is an exact fixed point (moments stay zero, update is
/// 0 / (0 + eps)).
inline void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state, double lr, const std::vector<std::string>& names,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ContractError("adam_step: block count mismatch");
  for (std::size_t b = 0; b < grads.size(); ++b)
    if (!grads[b].all_finite())
      throw TrainingError("adam_step: non-finite gradient in block '" +
                          (b < names.size() ? names[b] : std::to_string(b)) + "'");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    Tensor& p = *params[b];
    const Tensor& g = grads[b];
    if (!p.same_shape(g))
      throw ContractError("adam_step: gradient shape " + g.shape_str() + " vs parameter " +
                          p.shape_str() + " in block '" +
                          (b < names.size() ? names[b] : std::to_string(b)) + "'");
    Tensor& m = state.m[b];
    Tensor& v = state.v[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace fedldr::train
