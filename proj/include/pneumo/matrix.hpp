#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "pneumo/errors.hpp"
#include "pneumo/rng.hpp"

namespace pneumo {

/// Dense row-major matrix of 64-bit floats. The single numeric carrier for
/// tokens, weights and masks. Entries are finite except in attention masks,
/// where they are exactly 0 or -inf.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  /// Builds from nested braces: Matrix::of({{1,2},{3,4}}).
  static Matrix of(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_)
        throw DimensionError("Matrix::of: ragged initializer");
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool bit_equal(const Matrix& o) const {
    return same_shape(o) &&
           (data_.empty() ||
            std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}
}  // namespace detail

/// c = a * b. Cache-friendly ikj loop; deterministic accumulation order.
inline void matmul_into(Matrix& c, const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.rows(), "matmul: " + a.shape_str() +
                                            " incompatible with " + b.shape_str());
  c = Matrix(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.row(i);
    const double* arow = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c;
  matmul_into(c, a, b);
  return c;
}

/// c += a * b^T (a: m x k, b: n x k). Row-dot kernel.
inline void matmul_nt_accum(Matrix& c, const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: " + a.shape_str() +
                                            " incompatible with " + b.shape_str());
  detail::require(c.rows() == a.rows() && c.cols() == b.rows(),
                  "matmul_nt: bad accumulator " + c.shape_str());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] += acc;
    }
  }
}

/// c += a^T * b (a: k x m, b: k x n). Outer-product accumulation.
inline void matmul_tn_accum(Matrix& c, const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows(), "matmul_tn: " + a.shape_str() +
                                            " incompatible with " + b.shape_str());
  detail::require(c.rows() == a.cols() && c.cols() == b.cols(),
                  "matmul_tn: bad accumulator " + c.shape_str());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* arow = a.row(r);
    const double* brow = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = arow[i];
      if (ari == 0.0) continue;
      double* crow = c.row(i);
      for (std::size_t j = 0; j < n; ++j) crow[j] += ari * brow[j];
    }
  }
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline void add_inplace(Matrix& a, const Matrix& b) {
  detail::require(a.same_shape(b),
                  "add: " + a.shape_str() + " vs " + b.shape_str());
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

inline void axpy_inplace(Matrix& a, double s, const Matrix& b) {
  detail::require(a.same_shape(b),
                  "axpy: " + a.shape_str() + " vs " + b.shape_str());
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += s * pb[i];
}

inline void scale_inplace(Matrix& a, double s) {
  double* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] *= s;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  detail::require(a.same_shape(b),
                  "max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

/// Symmetric uniform init scaled by 1/sqrt(fan_in).
inline Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                           Rng& rng) {
  Matrix m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in ? fan_in : 1));
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace pneumo
