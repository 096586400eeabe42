#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "pstream/box.hpp"
#include "pstream/numerics.hpp"

namespace pstream {

struct EventLoss {
  SpatialMap map;        // motion[r] * error[r]
  double scalar = 0.0;   // mean of map over the grid
  SpatialMap motion;     // |f_next - f_now| per cell
  SpatialMap error;      // |f_next - f_pred| per cell
};

// Prediction error weighted by how much each cell actually changed.
EventLoss event_loss(const FeatureMap& next, const FeatureMap& now, const FeatureMap& predicted);

// Gradient with respect to `predicted` given a cotangent on the per-cell map.
// Cells with zero prediction error get zero gradient.
FeatureMap event_loss_backward(const FeatureMap& next, const FeatureMap& predicted,
                               const EventLoss& loss, const SpatialMap& grad_map);

struct ObjectLoss {
  double feature = 0.0;   // |f_O - f_O_hat|
  double center = 0.0;    // squared centre distance
  double geometry = 0.0;  // (sqrt w - sqrt w_hat)^2 + (sqrt h - sqrt h_hat)^2
};

ObjectLoss object_loss(std::span<const double> actor, std::span<const double> predicted_actor,
                       const BoundingBox& observed, const BoundingBox& predicted);

struct ObjectLossGrads {
  std::vector<double> actor;
  std::vector<double> predicted_actor;
  std::array<double, 4> predicted_box{};  // d/d(cx, cy, w, h) of the prediction
};

// Cotangents are the weights applied to each term in the total loss.
ObjectLossGrads object_loss_backward(std::span<const double> actor,
                                     std::span<const double> predicted_actor,
                                     const BoundingBox& observed, const BoundingBox& predicted,
                                     double feature_weight, double center_weight,
                                     double geometry_weight);

struct LossBreakdown {
  SpatialMap event_map;
  double event_scalar = 0.0;
  double object_feature = 0.0;
  double object_center = 0.0;
  double object_geometry = 0.0;
  double total = 0.0;

  double object_sum() const noexcept { return object_feature + object_center + object_geometry; }
};

// total = lambda1 * event + lambda2 * (feature + center + geometry)
LossBreakdown total_loss(SpatialMap event_map, double event_scalar, const ObjectLoss& object,
                         double lambda1, double lambda2);

struct AdaptiveLr {
  double lr = 1e-10;
  double delta_minus = 1e-1;
  double delta_plus = 1e-2;
  double lr_min = 1e-14;
  double lr_max = 1e-2;
  std::optional<double> prev_loss;
};

// Surprise-driven rate: grows by (1 + delta_minus) when the loss rises,
// shrinks by (1 - delta_plus) otherwise, clamped to [lr_min, lr_max].
AdaptiveLr adapt_lr(AdaptiveLr state, double current_loss);

}  // namespace pstream
