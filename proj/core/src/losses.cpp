#include "pstream/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pstream/error.hpp"

namespace pstream {

EventLoss event_loss(const FeatureMap& next, const FeatureMap& now, const FeatureMap& predicted) {
  if (!next.same_shape(now) || !next.same_shape(predicted)) {
    throw Error(ErrorCode::kShapeMismatch, "event_loss operands differ in shape");
  }
  EventLoss out;
  out.motion = l2_norm_channels(next, now);
  out.error = l2_norm_channels(next, predicted);
  out.map = SpatialMap(next.width(), next.height());
  double sum = 0.0;
  for (std::size_t r = 0; r < out.map.cells(); ++r) {
    out.map[r] = out.motion[r] * out.error[r];
    sum += out.map[r];
  }
  out.scalar = sum / static_cast<double>(out.map.cells());
  return out;
}

FeatureMap event_loss_backward(const FeatureMap& next, const FeatureMap& predicted,
                               const EventLoss& loss, const SpatialMap& grad_map) {
  FeatureMap grad(predicted.width(), predicted.height(), predicted.channels());
  for (std::size_t r = 0; r < grad.cells(); ++r) {
    const double e = loss.error[r];
    if (e == 0.0 || grad_map[r] == 0.0) continue;
    const double scale = grad_map[r] * loss.motion[r] / e;
    const auto p = predicted.cell(r);
    const auto n = next.cell(r);
    auto g = grad.cell(r);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = scale * (p[k] - n[k]);
  }
  return grad;
}

ObjectLoss object_loss(std::span<const double> actor, std::span<const double> predicted_actor,
                       const BoundingBox& observed, const BoundingBox& predicted) {
  if (actor.size() != predicted_actor.size()) {
    throw Error(ErrorCode::kShapeMismatch, "object_loss feature lengths differ");
  }
  if (!(observed.w > 0.0 && observed.h > 0.0 && predicted.w > 0.0 && predicted.h > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "object_loss needs boxes with positive extent");
  }
  ObjectLoss out;
  double acc = 0.0;
  for (std::size_t k = 0; k < actor.size(); ++k) {
    const double d = actor[k] - predicted_actor[k];
    acc += d * d;
  }
  out.feature = std::sqrt(acc);
  const double dx = observed.cx - predicted.cx;
  const double dy = observed.cy - predicted.cy;
  out.center = dx * dx + dy * dy;
  const double sw = std::sqrt(observed.w) - std::sqrt(predicted.w);
  const double sh = std::sqrt(observed.h) - std::sqrt(predicted.h);
  out.geometry = sw * sw + sh * sh;
  return out;
}

ObjectLossGrads object_loss_backward(std::span<const double> actor,
                                     std::span<const double> predicted_actor,
                                     const BoundingBox& observed, const BoundingBox& predicted,
                                     double feature_weight, double center_weight,
                                     double geometry_weight) {
  ObjectLossGrads g;
  g.actor.assign(actor.size(), 0.0);
  g.predicted_actor.assign(actor.size(), 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < actor.size(); ++k) {
    const double d = actor[k] - predicted_actor[k];
    acc += d * d;
  }
  const double norm = std::sqrt(acc);
  if (norm > 0.0 && feature_weight != 0.0) {
    for (std::size_t k = 0; k < actor.size(); ++k) {
      const double d = feature_weight * (actor[k] - predicted_actor[k]) / norm;
      g.actor[k] = d;
      g.predicted_actor[k] = -d;
    }
  }
  g.predicted_box[0] = -2.0 * center_weight * (observed.cx - predicted.cx);
  g.predicted_box[1] = -2.0 * center_weight * (observed.cy - predicted.cy);
  const double rw = std::sqrt(predicted.w);
  const double rh = std::sqrt(predicted.h);
  g.predicted_box[2] = -geometry_weight * (std::sqrt(observed.w) - rw) / rw;
  g.predicted_box[3] = -geometry_weight * (std::sqrt(observed.h) - rh) / rh;
  return g;
}

LossBreakdown total_loss(SpatialMap event_map, double event_scalar, const ObjectLoss& object,
                         double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
  }
  LossBreakdown out;
  out.event_map = std::move(event_map);
  out.event_scalar = event_scalar;
  out.object_feature = object.feature;
  out.object_center = object.center;
  out.object_geometry = object.geometry;
  out.total = lambda1 * out.event_scalar + lambda2 * out.object_sum();
  return out;
}

AdaptiveLr adapt_lr(AdaptiveLr state, double current_loss) {
  if (state.prev_loss) {
    if (current_loss > *state.prev_loss) {
      state.lr *= 1.0 + state.delta_minus;
    } else {
      state.lr *= 1.0 - state.delta_plus;
    }
  }
  state.lr = std::clamp(state.lr, state.lr_min, state.lr_max);
  state.prev_loss = current_loss;
  return state;
}

}  // namespace pstream
