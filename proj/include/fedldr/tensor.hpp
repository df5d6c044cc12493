#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "fedldr/errors.hpp"

namespace fedldr::num {

/// Dense row-major array of doubles, rank 1 to 3. The carrier for all model
/// math; no broadcasting, no views.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(count(), 0.0);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != count())
      throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str());
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  /// 2-D constructor from nested braces, row major.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged matrix initializer");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t i) const { return shape_[i]; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s.empty() ? "<empty>" : s;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::size_t count() const {
    return std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                           std::multiplies<std::size_t>());
  }
  void check_shape() const {
    if (shape_.empty() || shape_.size() > 3)
      throw ShapeError("tensor: rank must be 1..3, got " + std::to_string(shape_.size()));
    for (std::size_t e : shape_)
      if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + t.shape_str());
}

/// C[i,j] = sum_t A[i,t] * B[t,j].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.extent(1) != b.extent(0))
    throw ShapeError("matmul: inner extents disagree: " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a(i, t);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(t, j);
    }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor r({a.extent(1), a.extent(0)});
  for (std::size_t i = 0; i < a.extent(0); ++i)
    for (std::size_t j = 0; j < a.extent(1); ++j) r(j, i) = a(i, j);
  return r;
}

inline Tensor relu(const Tensor& a) {
  Tensor r = a;
  for (double& v : r.data()) v = v > 0.0 ? v : 0.0;
  return r;
}

/// Row-wise softmax with the max shifted out of every row first; without the
/// shift exp overflows for logits of a few hundred.
inline Tensor row_softmax(const Tensor& a) {
  require_matrix(a, "row_softmax");
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor r({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = a(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(a(i, j) - mx);
      r(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) r(i, j) /= sum;
  }
  return r;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("add: shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
  Tensor r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("sub: shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
  Tensor r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor r = a;
  for (double& v : r.data()) v *= c;
  return r;
}

inline double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

inline double sum_squares(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

inline double frobenius_norm(const Tensor& a) { return std::sqrt(sum_squares(a)); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("max_abs_diff: shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fedldr::num
