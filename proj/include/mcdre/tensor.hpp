#pragma once

// Dense row-major matrices and the value-level kernels shared by the
// differentiable ops in autodiff.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mcdre/error.hpp"

namespace mcdre {

template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix " + shape_of(rows_, cols_) + " given " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged initializer for matrix");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(values));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape() const { return shape_of(rows_, cols_); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  static std::string shape_of(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Tensor2D = Matrix<float>;

/// Default layer-norm epsilon.
inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline void require(bool ok, const std::string& op, const std::string& a, const std::string& b) {
  if (!ok) throw DimensionError(op + ": incompatible shapes " + a + " and " + b);
}

}  // namespace detail

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{0}) continue;
      auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

/// a * b^T
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt", a.shape(), b.shape());
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      T s{0};
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

/// a^T * b
template <class T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.rows() == b.rows(), "matmul_tn", a.shape(), b.shape());
  Matrix<T> out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ar = a.row(k);
    auto br = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = ar[i];
      if (aki == T{0}) continue;
      auto o = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// Row-wise softmax with max subtraction. Columns at index >= valid_cols are
/// treated as masked keys (probability exactly zero).
template <class T>
Matrix<T> softmax_rows(const Matrix<T>& m, std::size_t valid_cols = std::numeric_limits<std::size_t>::max()) {
  Matrix<T> out(m.rows(), m.cols());
  const std::size_t n = std::min(valid_cols, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    if (n == 0) continue;
    T mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    T sum{0};
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= sum;
  }
  return out;
}

/// Per-row (x - mean) / sqrt(var + eps) * gain + bias, biased variance.
template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias,
                     double eps = kLayerNormEps) {
  detail::require(gain.rows() == 1 && gain.cols() == x.cols(), "layer_norm", x.shape(), gain.shape());
  detail::require(bias.rows() == 1 && bias.cols() == x.cols(), "layer_norm", x.shape(), bias.shape());
  Matrix<T> out(x.rows(), x.cols());
  const T n = static_cast<T>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    T mean{0};
    for (T v : in) mean += v;
    mean /= n;
    T var{0};
    for (T v : in) var += (v - mean) * (v - mean);
    var /= n;
    const T rstd = T{1} / std::sqrt(var + static_cast<T>(eps));
    auto o = out.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) o[j] = (in[j] - mean) * rstd * gain(0, j) + bias(0, j);
  }
  return out;
}

/// Feature-axis concatenation; column blocks in argument order.
template <class T>
Matrix<T> concat_features(std::span<const Matrix<T>> parts) {
  if (parts.empty()) return {};
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == r, "concat_features", parts[0].shape(), p.shape());
    c += p.cols();
  }
  Matrix<T> out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      auto src = p.row(i);
      std::copy(src.begin(), src.end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
      off += p.cols();
    }
  }
  return out;
}

template <class T>
Matrix<T> concat_features(std::initializer_list<Matrix<T>> parts) {
  return concat_features(std::span<const Matrix<T>>(parts.begin(), parts.size()));
}

template <class T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](T v) { return std::isfinite(v); });
}

template <class U, class T>
Matrix<U> cast(const Matrix<T>& m) {
  std::vector<U> v(m.size());
  std::transform(m.values().begin(), m.values().end(), v.begin(), [](T x) { return static_cast<U>(x); });
  return Matrix<U>(m.rows(), m.cols(), std::move(v));
}

}  // namespace mcdre
