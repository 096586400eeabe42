#include "pstream/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pstream {

ActorPredictor::ActorPredictor(std::size_t feature_dim, std::size_t hidden_dim)
    : feature_cell("actor.feature", feature_dim, hidden_dim),
      geometry_cell("actor.geometry", feature_dim, hidden_dim),
      geometry_head("actor.geometry_head", hidden_dim, 4),
      feature_dim_(feature_dim) {
  if (hidden_dim != feature_dim) feature_head.emplace("actor.feature_head", hidden_dim, feature_dim);
}

void ActorPredictor::init(std::mt19937_64& rng) {
  feature_cell.init(rng);
  if (feature_head) feature_head->init(rng);
  geometry_cell.init(rng);
  geometry_head.init(rng);
}

void ActorPredictor::collect(ParamList& out) {
  feature_cell.collect(out);
  if (feature_head) feature_head->collect(out);
  geometry_cell.collect(out);
  geometry_head.collect(out);
}

ActorState ActorState::initial(std::size_t feature_dim, std::size_t hidden_dim) {
  ActorState s;
  s.feature_state = LstmState::zeros(hidden_dim);
  s.geometry_state = LstmState::zeros(hidden_dim);
  s.predicted_feature = Tensor::vector(feature_dim);
  return s;
}

ActorPrediction predict_actor(const ActorPredictor& predictor, const ActorState& actor,
                              const SpatialMap& alpha, const FeatureMap& predicted_map,
                              double min_box_extent) {
  if (!predicted_map.same_grid(alpha) || predicted_map.channels() != predictor.feature_dim()) {
    throw Error(ErrorCode::kShapeMismatch,
                "predict_actor: attention grid or predicted map channels do not match");
  }
  ActorPrediction p;
  p.alpha = alpha;
  p.predicted_map = predicted_map;

  const std::size_t cells = predicted_map.cells();
  p.summary = Tensor::vector(predicted_map.channels());
  const double inv = 1.0 / static_cast<double>(cells);
  for (std::size_t r = 0; r < cells; ++r) {
    const auto f = predicted_map.cell(r);
    const double w = alpha[r] * inv;
    for (std::size_t k = 0; k < f.size(); ++k) p.summary[k] += w * f[k];
  }

  LstmStep fstep = predictor.feature_cell.forward(p.summary.span(), actor.feature_state);
  p.feature_state = std::move(fstep.state);
  p.feature_cache = std::move(fstep.cache);
  if (predictor.feature_head) {
    p.feature = Tensor({predictor.feature_dim()},
                       predictor.feature_head->forward(p.feature_state.hidden.span()));
  } else {
    p.feature = p.feature_state.hidden;
  }

  LstmStep gstep = predictor.geometry_cell.forward(p.summary.span(), actor.geometry_state);
  p.geometry_state = std::move(gstep.state);
  p.geometry_cache = std::move(gstep.cache);
  const auto offset = predictor.geometry_head.forward(p.geometry_state.hidden.span());
  std::copy(offset.begin(), offset.end(), p.offset.begin());

  const std::array<double, 4> base{actor.last_box.cx, actor.last_box.cy, actor.last_box.w,
                                   actor.last_box.h};
  const std::array<double, 4> lo{0.0, 0.0, min_box_extent, min_box_extent};
  std::array<double, 4> out{};
  for (std::size_t q = 0; q < 4; ++q) {
    const double raw = base[q] + p.offset[q];
    p.unclamped[q] = raw >= lo[q] && raw <= 1.0;
    out[q] = std::clamp(raw, lo[q], 1.0);
  }
  p.box = {out[0], out[1], out[2], out[3], std::nullopt};
  ensure_finite(p.feature.span(), "predicted actor feature");
  ensure_finite(p.offset, "predicted box offset");
  return p;
}

ActorPredictionGrads predict_actor_backward(ActorPredictor& predictor, const ActorPrediction& p,
                                            std::span<const double> grad_feature,
                                            const std::array<double, 4>& grad_box) {
  const std::size_t n = predictor.hidden_dim();
  const std::vector<double> zero_cell(n, 0.0);

  std::vector<double> grad_hidden;
  if (predictor.feature_head) {
    grad_hidden = predictor.feature_head->backward(p.feature_state.hidden.span(), grad_feature);
  } else {
    grad_hidden.assign(grad_feature.begin(), grad_feature.end());
  }
  auto fgrads = predictor.feature_cell.backward(p.feature_cache, grad_hidden, zero_cell);

  std::array<double, 4> grad_offset{};
  for (std::size_t q = 0; q < 4; ++q) grad_offset[q] = p.unclamped[q] ? grad_box[q] : 0.0;
  const auto grad_geo_hidden =
      predictor.geometry_head.backward(p.geometry_state.hidden.span(), grad_offset);
  auto ggrads = predictor.geometry_cell.backward(p.geometry_cache, grad_geo_hidden, zero_cell);

  std::vector<double> grad_summary(fgrads.input.size());
  for (std::size_t k = 0; k < grad_summary.size(); ++k) {
    grad_summary[k] = fgrads.input[k] + ggrads.input[k];
  }

  const FeatureMap& f = p.predicted_map;
  const double inv = 1.0 / static_cast<double>(f.cells());
  ActorPredictionGrads grads{std::vector<double>(f.cells(), 0.0),
                             FeatureMap(f.width(), f.height(), f.channels())};
  for (std::size_t r = 0; r < f.cells(); ++r) {
    grads.alpha[r] = dot(grad_summary, f.cell(r)) * inv;
    auto g = grads.predicted_map.cell(r);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = p.alpha[r] * inv * grad_summary[k];
  }
  return grads;
}

Model::Model(const RunConfig& config, std::size_t feature_dim)
    : attention(feature_dim, config.hidden_dim, config.attention_dim),
      stack(feature_dim, config.hidden_dim, config.depth),
      actor(feature_dim, config.actor_hidden_dim) {
  std::mt19937_64 rng(config.seed);
  attention.init(rng);
  stack.init(rng);
  actor.init(rng);
}

ParamList Model::parameters() {
  ParamList out;
  attention.collect(out);
  stack.collect(out);
  actor.collect(out);
  return out;
}

void Model::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

StreamState StreamState::initial(const Model& model) {
  return {EventState::zeros(model.stack.depth(), model.stack.hidden_dim()),
          ActorState::initial(model.feature_dim(), model.actor.hidden_dim())};
}

ForwardPass forward_step(const Model& model, const StreamState& state, const FeatureMap& current,
                         const FeatureMap& next, const std::vector<BoundingBox>& next_proposals,
                         const RunConfig& config) {
  if (!current.same_shape(next)) {
    throw Error(ErrorCode::kShapeMismatch, "consecutive frames differ in shape");
  }
  if (current.channels() != model.feature_dim()) {
    throw Error(ErrorCode::kShapeMismatch,
                "frame has " + std::to_string(current.channels()) + " channels, model expects " +
                    std::to_string(model.feature_dim()));
  }
  ForwardPass pass;
  pass.next = next;
  pass.attention = attend(model.attention, current, state.event.event_repr.span());
  pass.stack = stack_forward(model.stack, pass.attention.event_map, state.event);
  pass.event = event_loss(next, current, pass.stack.prediction);
  pass.context = contextualize(next, pass.event.map);
  pass.actor_feature = actor_feature(next, pass.context.posterior);
  pass.localization = localize(pass.event.map, next_proposals, config.top_k, config.max_boxes);
  pass.prediction = predict_actor(model.actor, state.actor, pass.attention.alpha,
                                  pass.stack.prediction, config.min_box_extent);

  const BoundingBox& observed = pass.localization.selected.front();
  pass.object = object_loss(pass.actor_feature.actor.span(), pass.prediction.feature.span(),
                            observed, pass.prediction.box);
  if (!config.feature_loss) pass.object.feature = 0.0;
  if (!config.geometry_loss) {
    pass.object.center = 0.0;
    pass.object.geometry = 0.0;
  }
  pass.feature_weight = config.feature_loss ? config.lambda2 : 0.0;
  pass.geometry_weight = config.geometry_loss ? config.lambda2 : 0.0;
  pass.loss = total_loss(pass.event.map, pass.event.scalar, pass.object, config.lambda1,
                         config.lambda2);
  const double terms[] = {pass.loss.event_scalar, pass.loss.object_feature,
                          pass.loss.object_center, pass.loss.object_geometry, pass.loss.total};
  ensure_finite(terms, "loss breakdown");
  pass.event_weight = config.lambda1;
  return pass;
}

void backward_step(Model& model, const ForwardPass& pass) {
  const BoundingBox& observed = pass.localization.selected.front();
  const auto og = object_loss_backward(pass.actor_feature.actor.span(),
                                       pass.prediction.feature.span(), observed,
                                       pass.prediction.box, pass.feature_weight,
                                       pass.geometry_weight, pass.geometry_weight);

  auto pg = predict_actor_backward(model.actor, pass.prediction, og.predicted_actor,
                                   og.predicted_box);

  // The actor target depends on the error map through contextualization.
  const auto ag = actor_feature_backward(pass.actor_feature.cache, og.actor);
  const auto cg = contextualize_backward(pass.context.cache, ag.posterior);

  SpatialMap grad_map = cg.error_map;
  const double event_grad = pass.event_weight / static_cast<double>(grad_map.cells());
  for (std::size_t r = 0; r < grad_map.cells(); ++r) grad_map[r] += event_grad;

  FeatureMap grad_prediction =
      event_loss_backward(pass.next, pass.stack.prediction, pass.event, grad_map);
  {
    auto dst = grad_prediction.span();
    const auto src = pg.predicted_map.span();
    for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += src[q];
  }
  const FeatureMap grad_event_map = stack_backward(model.stack, pass.stack.cache, grad_prediction);
  attend_backward(model.attention, pass.attention.cache, pg.alpha, grad_event_map);
}

StreamState advance(const ForwardPass& pass) {
  StreamState s;
  s.event = pass.stack.state;
  s.actor.feature_state = pass.prediction.feature_state;
  s.actor.geometry_state = pass.prediction.geometry_state;
  s.actor.last_box = pass.localization.selected.front();
  s.actor.predicted_box = pass.prediction.box;
  s.actor.predicted_feature = pass.prediction.feature;
  return s;
}

AdaptiveLr initial_lr(const RunConfig& config) {
  AdaptiveLr lr;
  lr.lr = config.lr0;
  lr.delta_minus = config.delta_minus;
  lr.delta_plus = config.delta_plus;
  lr.lr_min = config.lr_min;
  lr.lr_max = config.lr_max;
  return lr;
}

StepResult train_step(Model& model, StreamState& state, AdaptiveLr& lr, const FeatureMap& current,
                      const FeatureMap& next, const std::vector<BoundingBox>& next_proposals,
                      const RunConfig& config) {
  ForwardPass pass = forward_step(model, state, current, next, next_proposals, config);
  backward_step(model, pass);
  const ParamList params = model.parameters();
  for (const Param* p : params) ensure_finite(p->grad.span(), "gradient of " + p->name);

  lr = adapt_lr(lr, pass.loss.total);
  for (Param* p : params) p->sgd_step(lr.lr);
  ++model.updates;
  for (Param* p : params) p->zero_grad();

  state = advance(pass);
  return {0, std::move(pass.loss), std::move(pass.localization),
          std::move(pass.actor_feature.actor), lr.lr};
}

StepResult infer_step(const Model& model, StreamState& state, const FeatureMap& current,
                      const FeatureMap& next, const std::vector<BoundingBox>& next_proposals,
                      const RunConfig& config) {
  ForwardPass pass = forward_step(model, state, current, next, next_proposals, config);
  state = advance(pass);
  return {0, std::move(pass.loss), std::move(pass.localization),
          std::move(pass.actor_feature.actor), 0.0};
}

Learner::Learner(Model model, RunConfig config, bool learning)
    : model_(std::move(model)),
      config_(std::move(config)),
      learning_(learning),
      lr_(initial_lr(config_)),
      state_(StreamState::initial(model_)) {
  validate(config_);
}

void Learner::begin_video() {
  state_ = StreamState::initial(model_);
  previous_.reset();
  frame_ = 0;
}

std::optional<StepResult> Learner::observe(const FeatureMap& features,
                                           const std::vector<BoundingBox>& proposals) {
  if (!previous_) {
    validate_for_grid(config_, features.width(), features.height());
    if (features.channels() != model_.feature_dim()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "frame has " + std::to_string(features.channels()) +
                      " channels, model expects " + std::to_string(model_.feature_dim()));
    }
    previous_ = features;
    frame_ = 0;
    return std::nullopt;
  }
  StepResult result =
      learning_ ? train_step(model_, state_, lr_, *previous_, features, proposals, config_)
                : infer_step(model_, state_, *previous_, features, proposals, config_);
  result.frame_index = ++frame_;
  result.localization.frame_index = frame_;
  previous_ = features;
  return result;
}

}  // namespace pstream
