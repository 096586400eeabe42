#include "pstream/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace pstream {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kStaleCache: return "stale cache";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kDimInconsistent: return "dim inconsistency";
    case ErrorCode::kInvalidRecord: return "invalid record";
  }
  return "unknown";
}

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                               " does not match shape product " +
                                               std::to_string(product(shape_)));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

SpatialMap::SpatialMap(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), values_(width * height, fill) {}

SpatialMap::SpatialMap(std::size_t width, std::size_t height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (values_.size() != width * height) {
    throw Error(ErrorCode::kShapeMismatch, "spatial map values do not match grid");
  }
}

FeatureMap::FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double fill)
    : width_(width), height_(height), channels_(channels),
      data_(width * height * channels, fill) {}

FeatureMap::FeatureMap(std::size_t width, std::size_t height, std::size_t channels,
                       std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (data_.size() != width * height * channels) {
    throw Error(ErrorCode::kShapeMismatch, "feature map data does not match dims");
  }
}

void ensure_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::kNonFinite,
                  std::string(what) + " has non-finite element at index " + std::to_string(i));
    }
  }
}

SpatialMap softmax_spatial(const SpatialMap& m) {
  if (m.cells() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "softmax over an empty map");
  }
  ensure_finite(m.span(), "softmax input");
  const double peak = *std::max_element(m.values().begin(), m.values().end());
  std::vector<double> out(m.cells());
  double total = 0.0;
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = std::exp(m[r] - peak);
    total += out[r];
  }
  for (double& v : out) v /= total;
  return SpatialMap(m.width(), m.height(), std::move(out));
}

std::vector<double> softmax_backward(std::span<const double> y, std::span<const double> dy) {
  const double inner = dot(y, dy);
  std::vector<double> dx(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) dx[r] = y[r] * (dy[r] - inner);
  return dx;
}

Tensor gap(const FeatureMap& f) {
  if (f.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "global average pooling of an empty map");
  }
  Tensor out = Tensor::vector(f.channels());
  for (std::size_t r = 0; r < f.cells(); ++r) {
    const auto cell = f.cell(r);
    for (std::size_t k = 0; k < cell.size(); ++k) out[k] += cell[k];
  }
  const double inv = 1.0 / static_cast<double>(f.cells());
  for (double& v : out.data()) v *= inv;
  ensure_finite(out.span(), "gap output");
  return out;
}

SpatialMap l2_norm_channels(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch, "l2_norm_channels operands differ in shape");
  }
  SpatialMap out(a.width(), a.height());
  for (std::size_t r = 0; r < a.cells(); ++r) {
    const auto x = a.cell(r);
    const auto y = b.cell(r);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double diff = x[k] - y[k];
      acc += diff * diff;
    }
    out[r] = std::sqrt(acc);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void matvec(const Tensor& w, std::span<const double> x, std::span<const double> b,
            std::span<double> y) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* row = w.data().data();
  for (std::size_t r = 0; r < rows; ++r, row += cols) {
    double acc = b.empty() ? 0.0 : b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_transpose_accumulate(const Tensor& w, std::span<const double> dy,
                                 std::span<double> x_grad) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* row = w.data().data();
  for (std::size_t r = 0; r < rows; ++r, row += cols) {
    const double g = dy[r];
    if (g == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) x_grad[c] += row[c] * g;
  }
}

void outer_accumulate(std::span<const double> dy, std::span<const double> x, Tensor& w_grad) {
  const std::size_t cols = w_grad.cols();
  double* row = w_grad.data().data();
  for (std::size_t r = 0; r < dy.size(); ++r, row += cols) {
    const double g = dy[r];
    if (g == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x,
                                     double eps) {
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  }
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f();
    x[i] = saved - eps;
    const double down = f();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient lengths differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_difference_check(const std::function<double(const Tensor&)>& f,
                               const std::function<Tensor(const Tensor&)>& grad,
                               const Tensor& params, double eps) {
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  }
  Tensor probe = params;
  const Tensor analytic = grad(params);
  if (!analytic.same_shape(params)) {
    throw Error(ErrorCode::kShapeMismatch, "analytic gradient shape differs from parameters");
  }
  const auto numeric = numeric_gradient([&] { return f(probe); }, probe.span(), eps);
  return max_relative_error(analytic.span(), numeric);
}

}  // namespace pstream
