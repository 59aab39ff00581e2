// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "confbt/util/error.hpp"

namespace confbt {

using Shape = std::vector<std::size_t>;

inline std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major array of doubles. Rank 0 is a scalar, rank 2 a matrix;
/// most kernels below operate on matrices.
class Tensor {
 public:
  Tensor() : shape_{0}, data_{} {}
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (NumElements(shape_) != data_.size()) {
      Fail(ErrorKind::kDimension, "tensor shape ", ShapeString(shape_),
           " does not match ", data_.size(), " elements");
    }
  }

  static Tensor Scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor Zeros(std::size_t rows, std::size_t cols) {
    return Tensor(Shape{rows, cols});
  }
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) Fail(ErrorKind::kDimension, "ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }
  static Tensor Row(std::span<const double> values) {
    return Tensor(Shape{1, values.size()},
                  std::vector<double>(values.begin(), values.end()));
  }
  static Tensor Identity(std::size_t n) {
    Tensor t = Zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool IsScalar() const { return data_.size() == 1 && rank() <= 2; }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1);
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }
  double item() const {
    if (data_.size() != 1) {
      Fail(ErrorKind::kDimension, "item() on tensor of shape ", ShapeString(shape_));
    }
    return data_[0];
  }

  bool AllFinite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

inline void RequireMatrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    Fail(ErrorKind::kDimension, what, " expects a matrix, got ", ShapeString(t.shape()));
  }
}

/// C = A * B. The sum over the inner index runs in ascending order for every
/// output element, so each output row depends only on the matching input row.
inline Tensor Matmul(const Tensor& a, const Tensor& b) {
  RequireMatrix(a, "matmul");
  RequireMatrix(b, "matmul");
  if (a.cols() != b.rows()) {
    Fail(ErrorKind::kDimension, "matmul shape mismatch: ", ShapeString(a.shape()),
         " x ", ShapeString(b.shape()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor c = Tensor::Zeros(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = pc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* bp = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

/// C = A * B^T.
inline Tensor MatmulNT(const Tensor& a, const Tensor& b) {
  RequireMatrix(a, "matmul_nt");
  RequireMatrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    Fail(ErrorKind::kDimension, "matmul_nt shape mismatch: ", ShapeString(a.shape()),
         " x ", ShapeString(b.shape()), "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor c = Tensor::Zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data().data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data().data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

/// C = A^T * B.
inline Tensor MatmulTN(const Tensor& a, const Tensor& b) {
  RequireMatrix(a, "matmul_tn");
  RequireMatrix(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    Fail(ErrorKind::kDimension, "matmul_tn shape mismatch: ", ShapeString(a.shape()),
         "^T x ", ShapeString(b.shape()));
  }
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Tensor c = Tensor::Zeros(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data().data() + p * n;
    const double* bp = b.data().data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = ap[i];
      double* ci = c.data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

inline Tensor Transpose(const Tensor& a) {
  RequireMatrix(a, "transpose");
  Tensor t = Tensor::Zeros(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// Numerically stable softmax over a contiguous run of `n` values.
/// Only the first `valid` entries participate; the rest are set to zero.
inline void SoftmaxInPlace(double* x, std::size_t n, std::size_t valid) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < valid; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < valid; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  for (std::size_t j = 0; j < valid; ++j) x[j] /= sum;
  for (std::size_t j = valid; j < n; ++j) x[j] = 0.0;
}

inline void LogSoftmaxInPlace(double* x, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < n; ++j) x[j] -= lse;
}

}  // namespace kernels

/// Softmax along `axis` of a vector (axis 0) or a matrix (axis 0 or 1).
inline Tensor Softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() == 1) {
    if (axis != 0) Fail(ErrorKind::kDimension, "softmax axis ", axis, " invalid for rank 1");
    if (x.size() == 0) Fail(ErrorKind::kDimension, "softmax over empty axis");
    Tensor y = x;
    kernels::SoftmaxInPlace(y.data().data(), y.size(), y.size());
    return y;
  }
  kernels::RequireMatrix(x, "softmax");
  if (axis > 1) Fail(ErrorKind::kDimension, "softmax axis ", axis, " invalid for rank 2");
  if (axis == 1) {
    if (x.cols() == 0) Fail(ErrorKind::kDimension, "softmax over empty axis");
    Tensor y = x;
    for (std::size_t i = 0; i < y.rows(); ++i)
      kernels::SoftmaxInPlace(y.row(i).data(), y.cols(), y.cols());
    return y;
  }
  if (x.rows() == 0) Fail(ErrorKind::kDimension, "softmax over empty axis");
  return kernels::Transpose(Softmax(kernels::Transpose(x), 1));
}

}  // namespace confbt
