#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "pstream/error.hpp"

namespace pstream {

// Dense row-major tensor of doubles. Rank-1 tensors double as vectors,
// rank-2 as (rows x cols) matrices.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Scalar per grid cell, raster order (row j major, column i minor).
class SpatialMap {
 public:
  SpatialMap() = default;
  SpatialMap(std::size_t width, std::size_t height, double fill = 0.0);
  SpatialMap(std::size_t width, std::size_t height, std::vector<double> values);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t cells() const noexcept { return values_.size(); }

  double& at(std::size_t i, std::size_t j) { return values_[j * width_ + i]; }
  double at(std::size_t i, std::size_t j) const { return values_[j * width_ + i]; }
  double& operator[](std::size_t r) { return values_[r]; }
  double operator[](std::size_t r) const { return values_[r]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> values_;
};

// width x height grid of channel vectors. Channel is the fastest-varying
// axis; cells are stored in raster order, so cell(r) is contiguous.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double fill = 0.0);
  FeatureMap(std::size_t width, std::size_t height, std::size_t channels, std::vector<double> data);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t cells() const noexcept { return width_ * height_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(j * width_ + i) * channels_ + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(j * width_ + i) * channels_ + k];
  }

  std::span<double> cell(std::size_t r) { return {data_.data() + r * channels_, channels_}; }
  std::span<const double> cell(std::size_t r) const {
    return {data_.data() + r * channels_, channels_};
  }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const FeatureMap& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }
  bool same_grid(const SpatialMap& m) const noexcept {
    return width_ == m.width() && height_ == m.height();
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

// Throws ErrorCode::kNonFinite naming `what` if any element is NaN/Inf.
void ensure_finite(std::span<const double> values, std::string_view what);

// Spatial softmax with max-subtraction.
SpatialMap softmax_spatial(const SpatialMap& m);

// Vector-Jacobian product of softmax: given y = softmax(x) and dL/dy,
// returns dL/dx = y * (dy - <dy, y>).
std::vector<double> softmax_backward(std::span<const double> y, std::span<const double> dy);

// Global average pooling over all cells, per channel.
Tensor gap(const FeatureMap& f);

// Per-cell Euclidean distance across channels.
SpatialMap l2_norm_channels(const FeatureMap& a, const FeatureMap& b);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

// y = W x + b (b may be empty).
void matvec(const Tensor& w, std::span<const double> x, std::span<const double> b,
            std::span<double> y);
// x_grad += W^T dy.
void matvec_transpose_accumulate(const Tensor& w, std::span<const double> dy,
                                 std::span<double> x_grad);
// W_grad += dy x^T.
void outer_accumulate(std::span<const double> dy, std::span<const double> x, Tensor& w_grad);

double sigmoid(double x);

// Central-difference gradient of `f` with respect to `x`, perturbing each
// coordinate in place and restoring it afterwards.
std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x,
                                     double eps);

// max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

// Gradient verification for a scalar function of one tensor.
double finite_difference_check(const std::function<double(const Tensor&)>& f,
                               const std::function<Tensor(const Tensor&)>& grad,
                               const Tensor& params, double eps);

}  // namespace pstream
