#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fedldr/rng.hpp"
#include "fedldr/tensor.hpp"
#include "fedldr/util.hpp"

namespace fedldr::data {

using num::Tensor;

/// A multivariate series: readings is steps x N x F, timestamps carries the
/// raw first-column values from the source file (or 0,1,2,... for synthetic
/// data) so re-serialization is lossless.
struct TimeSeriesDataset {
  Tensor readings;  // steps x N x F
  std::vector<double> timestamps;

  std::size_t steps() const { return readings.extent(0); }
  std::size_t n_nodes() const { return readings.extent(1); }
  std::size_t n_features() const { return readings.extent(2); }
};

/// One training sample. Rows are nodes; the input row for node i is the
/// node's last T readings flattened time-major ([t0 f0..fF, t1 f0..fF, ...]),
/// the target row is the following horizon readings in the same layout.
struct WindowSample {
  Tensor input;   // N x (T*F)
  Tensor target;  // N x (horizon*F)
  std::size_t origin;  // global timestep index of the first input row
};

/// z-score parameters, one mean/std per feature, fit on the training segment.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct NodeRange {
  std::size_t lo;
  std::size_t hi;  // exclusive
  std::size_t count() const { return hi - lo; }
};

struct ClientPartition {
  std::vector<NodeRange> ranges;
};

// ---- CSV ---------------------------------------------------------------------

namespace detail {

/// Header cells after "timestamp" are node_0..node_{N-1}, or node_i_f{j} when
/// F > 1. Returns {N, F} and validates the grid is complete and in order.
inline std::pair<std::size_t, std::size_t> parse_header(
    const std::vector<std::string_view>& cells) {
  if (cells.empty() || util::trim(cells[0]) != "timestamp")
    throw ParseError("csv header: first column must be 'timestamp'");
  if (cells.size() < 2) throw ParseError("csv header: no node columns");
  const bool suffixed = util::trim(cells[1]).find("_f") != std::string_view::npos &&
                        util::trim(cells[1]).rfind("node_", 0) == 0 &&
                        util::trim(cells[1]) != "node_0";
  // Determine F from the first node's run of columns.
  std::size_t f = 1;
  if (suffixed || util::trim(cells[1]) == "node_0_f0") {
    f = 0;
    while (1 + f < cells.size() &&
           util::trim(cells[1 + f]) == "node_0_f" + std::to_string(f))
      ++f;
    if (f == 0) throw ParseError("csv header: unrecognized column '" + std::string(cells[1]) + "'");
  }
  const std::size_t data_cols = cells.size() - 1;
  if (data_cols % f != 0)
    throw ParseError("csv header: " + std::to_string(data_cols) +
                     " data columns not divisible by " + std::to_string(f) + " features");
  const std::size_t n = data_cols / f;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const std::string want =
          f == 1 ? "node_" + std::to_string(i)
                 : "node_" + std::to_string(i) + "_f" + std::to_string(j);
      const std::string_view got = util::trim(cells[1 + i * f + j]);
      if (got != want)
        throw ParseError("csv header: expected '" + want + "', got '" + std::string(got) + "'");
    }
  return {n, f};
}

}  // namespace detail

inline TimeSeriesDataset load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("load_csv: cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("load_csv: empty file: " + path);
  const auto [n, f] = detail::parse_header(util::split_csv_line(line));

  std::vector<double> timestamps;
  std::vector<double> values;
  std::size_t row = 1;  // header was row 0
  while (std::getline(is, line)) {
    if (util::trim(line).empty()) {
      ++row;
      continue;
    }
    const auto cells = util::split_csv_line(line);
    if (cells.size() != 1 + n * f)
      throw ParseError("load_csv: row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(1 + n * f));
    const std::string where = "load_csv: row " + std::to_string(row);
    timestamps.push_back(util::parse_double(util::trim(cells[0]), where));
    for (std::size_t c = 1; c < cells.size(); ++c)
      values.push_back(util::parse_double(util::trim(cells[c]), where));
    ++row;
  }
  if (timestamps.empty()) throw ParseError("load_csv: no timesteps in " + path);

  TimeSeriesDataset ds;
  ds.readings = Tensor({timestamps.size(), n, f}, std::move(values));
  ds.timestamps = std::move(timestamps);
  if (!ds.readings.all_finite()) throw ParseError("load_csv: non-finite value in " + path);
  return ds;
}

inline void save_csv(const TimeSeriesDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("save_csv: cannot open for write: " + path);
  os << "timestamp";
  for (std::size_t i = 0; i < ds.n_nodes(); ++i) {
    if (ds.n_features() == 1)
      os << ",node_" << i;
    else
      for (std::size_t j = 0; j < ds.n_features(); ++j) os << ",node_" << i << "_f" << j;
  }
  os << '\n';
  for (std::size_t t = 0; t < ds.steps(); ++t) {
    os << util::format_double(ds.timestamps[t]);
    for (std::size_t i = 0; i < ds.n_nodes(); ++i)
      for (std::size_t j = 0; j < ds.n_features(); ++j)
        os << ',' << util::format_double(ds.readings(t, i, j));
    os << '\n';
  }
  if (!os) throw ParseError("save_csv: write failed: " + path);
}

// ---- synthetic generator ------------------------------------------------------

/// Ground truth the generator worked from, returned for diagnosis: the hidden
/// mixing graph plus the per-node seasonal phases and offsets.
struct SyntheticTruth {
  Tensor w;  // N x N row-stochastic
  std::vector<double> phase;
  std::vector<double> offset;
};

/// Driving recurrence: x_{t+1} = 0.6 * W* x_t + sin(2*pi*(t+1)/24 + phase_i)
/// + offset_i + noise. W* is a ring with seeded random shortcuts, rows
/// normalized to sum 1. offset_scale spreads the per-node offsets and is the
/// heterogeneity knob for federation experiments.
inline std::pair<TimeSeriesDataset, SyntheticTruth> generate_synthetic(
    std::size_t n, std::size_t steps, std::uint64_t seed, double noise_sigma,
    double offset_scale = 1.0) {
  if (n < 2) throw ContractError("generate_synthetic: need at least 2 nodes");
  if (steps < 1) throw ContractError("generate_synthetic: need at least 1 step");
  num::Rng rng(seed);

  SyntheticTruth truth;
  truth.w = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    truth.w(i, i) = 1.0;
    truth.w(i, (i + 1) % n) = 1.0;
    truth.w(i, (i + n - 1) % n) = 1.0;
  }
  const std::size_t shortcuts = n / 4;
  for (std::size_t s = 0; s < shortcuts; ++s) {
    const std::size_t a = rng.next_u64() % n;
    const std::size_t b = rng.next_u64() % n;
    if (a != b) truth.w(a, b) = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += truth.w(i, j);
    for (std::size_t j = 0; j < n; ++j) truth.w(i, j) /= row;
  }

  truth.phase.resize(n);
  truth.offset.resize(n);
  for (std::size_t i = 0; i < n; ++i) truth.phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) truth.offset[i] = offset_scale * rng.uniform(-1.0, 1.0);

  TimeSeriesDataset ds;
  ds.readings = Tensor({steps, n, std::size_t{1}});
  ds.timestamps.resize(steps);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = truth.offset[i] + rng.normal();
  for (std::size_t t = 0; t < steps; ++t) {
    ds.timestamps[t] = static_cast<double>(t);
    for (std::size_t i = 0; i < n; ++i) ds.readings(t, i, 0) = x[i];
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double mix = 0.0;
      for (std::size_t j = 0; j < n; ++j) mix += truth.w(i, j) * x[j];
      next[i] = 0.6 * mix +
                std::sin(2.0 * std::numbers::pi * static_cast<double>(t + 1) / 24.0 +
                         truth.phase[i]) +
                truth.offset[i] + noise_sigma * rng.normal();
    }
    x = std::move(next);
  }
  return {std::move(ds), std::move(truth)};
}

// ---- splitting / windowing ----------------------------------------------------

/// Cuts the timeline into contiguous train/val/test segments of floor(0.70*S)
/// and floor(0.15*S) steps, remainder to test. min_len is the shortest usable
/// segment (history + horizon) and each split must reach it.
inline std::array<TimeSeriesDataset, 3> split_temporal(const TimeSeriesDataset& ds,
                                                       std::size_t min_len,
                                                       double train_frac = 0.70,
                                                       double val_frac = 0.15) {
  const std::size_t s = ds.steps();
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(s)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(s)));
  const std::size_t n_test = s - n_train - n_val;
  if (n_train < min_len || n_val < min_len || n_test < min_len)
    throw ConfigError("split_temporal: segments " + std::to_string(n_train) + "/" +
                      std::to_string(n_val) + "/" + std::to_string(n_test) +
                      " too short for window length " + std::to_string(min_len));

  auto slice = [&](std::size_t lo, std::size_t len) {
    TimeSeriesDataset out;
    out.readings = Tensor({len, ds.n_nodes(), ds.n_features()});
    out.timestamps.assign(ds.timestamps.begin() + lo, ds.timestamps.begin() + lo + len);
    const std::size_t row = ds.n_nodes() * ds.n_features();
    std::copy(ds.readings.data().begin() + lo * row,
              ds.readings.data().begin() + (lo + len) * row, out.readings.data().begin());
    return out;
  };
  return {slice(0, n_train), slice(n_train, n_val), slice(n_train + n_val, n_test)};
}

/// Slides a length-(T+horizon) window over one segment; one sample per start
/// offset. Windows are built inside a single segment, so no sample can span a
/// split boundary. segment_start offsets the recorded origins back into the
/// full timeline.
inline std::vector<WindowSample> make_windows(const TimeSeriesDataset& segment, std::size_t history,
                                              std::size_t horizon,
                                              std::size_t segment_start = 0) {
  const std::size_t span = history + horizon;
  if (segment.steps() < span)
    throw ConfigError("make_windows: segment of " + std::to_string(segment.steps()) +
                      " steps cannot hold a window of " + std::to_string(span));
  const std::size_t n = segment.n_nodes(), f = segment.n_features();
  std::vector<WindowSample> out;
  out.reserve(segment.steps() - span + 1);
  for (std::size_t s = 0; s + span <= segment.steps(); ++s) {
    WindowSample w;
    w.origin = segment_start + s;
    w.input = Tensor({n, history * f});
    w.target = Tensor({n, horizon * f});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < history; ++t)
        for (std::size_t j = 0; j < f; ++j) w.input(i, t * f + j) = segment.readings(s + t, i, j);
      for (std::size_t t = 0; t < horizon; ++t)
        for (std::size_t j = 0; j < f; ++j)
          w.target(i, t * f + j) = segment.readings(s + history + t, i, j);
    }
    out.push_back(std::move(w));
  }
  return out;
}

/// First (N mod K) clients take ceil(N/K) nodes, the rest floor(N/K); ranges
/// are contiguous and ordered.
inline ClientPartition partition_nodes(std::size_t n, std::size_t k) {
  if (k < 1 || k > n)
    throw ConfigError("partition_nodes: need 1 <= clients <= nodes, got " + std::to_string(k) +
                      " clients for " + std::to_string(n) + " nodes");
  ClientPartition p;
  const std::size_t base = n / k, extra = n % k;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t size = base + (i < extra ? 1 : 0);
    p.ranges.push_back({lo, lo + size});
    lo += size;
  }
  return p;
}

// ---- normalization ------------------------------------------------------------

inline NormStats fit_normalizer(const TimeSeriesDataset& train) {
  NormStats st;
  const std::size_t f = train.n_features();
  st.mean.assign(f, 0.0);
  st.stddev.assign(f, 0.0);
  const auto count = static_cast<double>(train.steps() * train.n_nodes());
  for (std::size_t t = 0; t < train.steps(); ++t)
    for (std::size_t i = 0; i < train.n_nodes(); ++i)
      for (std::size_t j = 0; j < f; ++j) st.mean[j] += train.readings(t, i, j);
  for (std::size_t j = 0; j < f; ++j) st.mean[j] /= count;
  for (std::size_t t = 0; t < train.steps(); ++t)
    for (std::size_t i = 0; i < train.n_nodes(); ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = train.readings(t, i, j) - st.mean[j];
        st.stddev[j] += d * d;
      }
  for (std::size_t j = 0; j < f; ++j) {
    st.stddev[j] = std::sqrt(st.stddev[j] / count);
    if (st.stddev[j] <= 0.0)
      throw ConfigError("fit_normalizer: feature " + std::to_string(j) +
                        " is constant on the training segment");
  }
  return st;
}

inline TimeSeriesDataset normalize(const TimeSeriesDataset& ds, const NormStats& st) {
  TimeSeriesDataset out = ds;
  for (std::size_t t = 0; t < out.steps(); ++t)
    for (std::size_t i = 0; i < out.n_nodes(); ++i)
      for (std::size_t j = 0; j < out.n_features(); ++j)
        out.readings(t, i, j) = (out.readings(t, i, j) - st.mean[j]) / st.stddev[j];
  return out;
}

/// Undo z-scoring on a prediction/target matrix whose columns cycle through
/// features fastest (the WindowSample layout).
inline Tensor denormalize(const Tensor& values, const NormStats& st) {
  require_matrix(values, "denormalize");
  const std::size_t f = st.mean.size();
  if (values.extent(1) % f != 0)
    throw ContractError("denormalize: width " + std::to_string(values.extent(1)) +
                        " not a multiple of feature count " + std::to_string(f));
  Tensor out = values;
  for (std::size_t i = 0; i < out.extent(0); ++i)
    for (std::size_t c = 0; c < out.extent(1); ++c) {
      const std::size_t j = c % f;
      out(i, c) = out(i, c) * st.stddev[j] + st.mean[j];
    }
  return out;
}

}  // namespace fedldr::data
