// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors and the value-level kernels the gradient
// tape is built from.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace decaylab::numerics {

class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::span<const double> values);
  static Tensor column(std::span<const double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);

// ---- value kernels -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T b without materialising the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
void add_inplace(Tensor& acc, const Tensor& x);

double sigmoid(double x);
double log_sigmoid(double x);
double softplus(double x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);

double sum(const Tensor& x);
double max_abs(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& x);

/// How an empty reduction is treated by logsumexp.
enum class EmptyReduction { kError, kNegativeInfinity };

/// Stable log(sum(exp(x))). Empty input is a DomainError unless the caller
/// opts into the -inf sentinel.
double logsumexp(std::span<const double> x,
                 EmptyReduction empty = EmptyReduction::kError);

/// logsumexp along `axis` of a rank-1 or rank-2 tensor. The reduced axis is
/// removed; a rank-1 input yields shape {1}.
Tensor logsumexp(const Tensor& x, std::size_t axis);

/// x / sqrt(mean(x^2) + eps) * gamma along the last axis.
Tensor rmsnorm(const Tensor& x, const Tensor& gamma, double eps);

}  // namespace decaylab::numerics
