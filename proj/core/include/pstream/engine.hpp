#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pstream/attention.hpp"
#include "pstream/box.hpp"
#include "pstream/config.hpp"
#include "pstream/localizer.hpp"
#include "pstream/losses.hpp"
#include "pstream/recurrent.hpp"

namespace pstream {

// Two recurrent predictors driven by the same global summary of the
// anticipated frame: one forecasts the actor feature, the other an offset
// for the actor box.
class ActorPredictor {
 public:
  ActorPredictor() = default;
  ActorPredictor(std::size_t feature_dim, std::size_t hidden_dim);

  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t hidden_dim() const noexcept { return feature_cell.hidden_dim(); }

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  LstmCell feature_cell;
  std::optional<Linear> feature_head;  // present when hidden_dim != feature_dim
  LstmCell geometry_cell;
  Linear geometry_head;                // hidden -> (dcx, dcy, dw, dh)

 private:
  std::size_t feature_dim_ = 0;
};

struct ActorState {
  LstmState feature_state;
  LstmState geometry_state;
  BoundingBox last_box = BoundingBox::full_frame();
  BoundingBox predicted_box = BoundingBox::full_frame();
  Tensor predicted_feature;

  static ActorState initial(std::size_t feature_dim, std::size_t hidden_dim);
};

struct ActorPrediction {
  Tensor summary;                 // GAP(alpha * predicted map)
  Tensor feature;                 // predicted actor feature
  std::array<double, 4> offset{};
  BoundingBox box;                // clamp(last_box + offset)
  std::array<bool, 4> unclamped{};
  LstmState feature_state;
  LstmState geometry_state;
  // caches
  LstmCache feature_cache;
  LstmCache geometry_cache;
  SpatialMap alpha;
  FeatureMap predicted_map;
};

ActorPrediction predict_actor(const ActorPredictor& predictor, const ActorState& actor,
                              const SpatialMap& alpha, const FeatureMap& predicted_map,
                              double min_box_extent);

struct ActorPredictionGrads {
  std::vector<double> alpha;
  FeatureMap predicted_map;
};

// Recurrent states entering the prediction are constants.
ActorPredictionGrads predict_actor_backward(ActorPredictor& predictor, const ActorPrediction& p,
                                            std::span<const double> grad_feature,
                                            const std::array<double, 4>& grad_box);

struct Model {
  Model() = default;
  // Builds and initializes every parameter from config.seed.
  Model(const RunConfig& config, std::size_t feature_dim);

  std::size_t feature_dim() const noexcept { return stack.feature_dim(); }

  AttentionParams attention;
  PredictionStack stack;
  ActorPredictor actor;
  std::uint64_t updates = 0;

  // Fixed order: attention, stack layers, projection, actor predictors.
  ParamList parameters();
  void zero_grad();
};

struct StreamState {
  EventState event;
  ActorState actor;

  static StreamState initial(const Model& model);
};

// Everything one step computes before the backward pass.
struct ForwardPass {
  AttendResult attention;
  StackForward stack;
  EventLoss event;
  ContextResult context;
  ActorFeatureResult actor_feature;
  LocalizationResult localization;
  ActorPrediction prediction;
  ObjectLoss object;
  LossBreakdown loss;
  double event_weight = 0.0;
  double feature_weight = 0.0;   // lambda2, or 0 when the term is disabled
  double geometry_weight = 0.0;
  FeatureMap next;
};

// One observe-predict-compare-attend-contextualize-localize pass for the
// pair (current, next). Localization and the actor targets refer to `next`.
ForwardPass forward_step(const Model& model, const StreamState& state, const FeatureMap& current,
                         const FeatureMap& next, const std::vector<BoundingBox>& next_proposals,
                         const RunConfig& config);

// Accumulates d(total)/d(param) into the gradient buffers.
void backward_step(Model& model, const ForwardPass& pass);

// State carried into the following step.
StreamState advance(const ForwardPass& pass);

struct StepResult {
  std::size_t frame_index = 0;  // index of the newer frame of the pair
  LossBreakdown loss;
  LocalizationResult localization;
  Tensor actor_feature;
  double lr = 0.0;
};

// Full training step: forward, backward, adaptive rate, SGD, zero grads.
// Throws ErrorCode::kNonFinite naming the first bad loss or gradient.
StepResult train_step(Model& model, StreamState& state, AdaptiveLr& lr, const FeatureMap& current,
                      const FeatureMap& next, const std::vector<BoundingBox>& next_proposals,
                      const RunConfig& config);

// Same pass with frozen parameters.
StepResult infer_step(const Model& model, StreamState& state, const FeatureMap& current,
                      const FeatureMap& next, const std::vector<BoundingBox>& next_proposals,
                      const RunConfig& config);

AdaptiveLr initial_lr(const RunConfig& config);

// Streaming driver. Frames are pushed once, in order; there is no API for
// revisiting earlier frames.
class Learner {
 public:
  Learner(Model model, RunConfig config, bool learning);

  // Resets recurrent and actor state for a new video.
  void begin_video();
  // Returns a step result for every frame after the first of a video.
  std::optional<StepResult> observe(const FeatureMap& features,
                                    const std::vector<BoundingBox>& proposals);

  const Model& model() const noexcept { return model_; }
  Model& model() noexcept { return model_; }
  const AdaptiveLr& lr() const noexcept { return lr_; }
  void set_lr(const AdaptiveLr& lr) { lr_ = lr; }
  const RunConfig& config() const noexcept { return config_; }
  bool learning() const noexcept { return learning_; }

 private:
  Model model_;
  RunConfig config_;
  bool learning_;
  AdaptiveLr lr_;
  StreamState state_;
  std::optional<FeatureMap> previous_;
  std::size_t frame_ = 0;
};

}  // namespace pstream
