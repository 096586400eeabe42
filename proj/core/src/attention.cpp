#include "pstream/attention.hpp"

#include <cmath>
#include <string>

namespace pstream {

namespace {

// Versions only grow, so the sum changes whenever any tensor is updated.
std::uint64_t version_sum(const AttentionParams& p) {
  return p.feature_proj.version + p.event_proj.version + p.score.version;
}

}  // namespace

AttentionParams::AttentionParams(std::size_t feature_dim, std::size_t event_dim,
                                 std::size_t attention_dim)
    : feature_proj("attention.feature_proj", {attention_dim, feature_dim}),
      event_proj("attention.event_proj", {attention_dim, event_dim}),
      score("attention.score", {attention_dim}),
      feature_dim_(feature_dim),
      event_dim_(event_dim),
      attention_dim_(attention_dim) {
  if (feature_dim == 0 || event_dim == 0 || attention_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "attention dimensions must be positive");
  }
}

void AttentionParams::init(std::mt19937_64& rng) {
  feature_proj.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(feature_dim_)));
  event_proj.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(event_dim_)));
  score.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(attention_dim_)));
}

AttendResult attend(const AttentionParams& params, const FeatureMap& features,
                    std::span<const double> event_hidden) {
  if (features.channels() != params.feature_dim() || event_hidden.size() != params.event_dim()) {
    throw Error(ErrorCode::kShapeMismatch,
                "attend: features have " + std::to_string(features.channels()) +
                    " channels and event state " + std::to_string(event_hidden.size()) +
                    " entries; expected " + std::to_string(params.feature_dim()) + " and " +
                    std::to_string(params.event_dim()));
  }
  const std::size_t cells = features.cells();
  const std::size_t a = params.attention_dim();

  std::vector<double> event_term(a);
  matvec(params.event_proj.value, event_hidden, {}, event_term);

  AttendResult out;
  out.cache.version = version_sum(params);
  out.cache.features = features;
  out.cache.event_hidden.assign(event_hidden.begin(), event_hidden.end());
  out.cache.activations.resize(cells * a);

  SpatialMap scores(features.width(), features.height());
  std::vector<double> u(a);
  for (std::size_t r = 0; r < cells; ++r) {
    matvec(params.feature_proj.value, features.cell(r), event_term, u);
    double s = 0.0;
    for (std::size_t q = 0; q < a; ++q) {
      const double t = std::tanh(u[q]);
      out.cache.activations[r * a + q] = t;
      s += params.score.value[q] * t;
    }
    scores[r] = s;
  }
  out.alpha = softmax_spatial(scores);
  out.cache.alpha = out.alpha;

  out.event_map = FeatureMap(features.width(), features.height(), features.channels());
  for (std::size_t r = 0; r < cells; ++r) {
    const auto src = features.cell(r);
    auto dst = out.event_map.cell(r);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = out.alpha[r] * src[k];
  }
  return out;
}

AttendGrads attend_backward(AttentionParams& params, const AttendCache& cache,
                            std::span<const double> grad_alpha, const FeatureMap& grad_event_map) {
  const FeatureMap& f = cache.features;
  if (cache.version != version_sum(params)) {
    throw Error(ErrorCode::kStaleCache, "attention parameters changed since forward pass");
  }
  if (!grad_event_map.same_shape(f) || grad_alpha.size() != f.cells()) {
    throw Error(ErrorCode::kStaleCache, "attention cotangents do not match cached grid");
  }
  const std::size_t cells = f.cells();
  const std::size_t a = params.attention_dim();

  AttendGrads grads{FeatureMap(f.width(), f.height(), f.channels()),
                    std::vector<double>(params.event_dim(), 0.0)};

  std::vector<double> d_alpha(grad_alpha.begin(), grad_alpha.end());
  for (std::size_t r = 0; r < cells; ++r) {
    d_alpha[r] += dot(grad_event_map.cell(r), f.cell(r));
    auto df = grads.features.cell(r);
    const auto g = grad_event_map.cell(r);
    for (std::size_t k = 0; k < df.size(); ++k) df[k] = cache.alpha[r] * g[k];
  }
  const auto d_score = softmax_backward(cache.alpha.span(), d_alpha);

  std::vector<double> du(a);
  std::vector<double> du_total(a, 0.0);
  for (std::size_t r = 0; r < cells; ++r) {
    const double ds = d_score[r];
    if (ds == 0.0) continue;
    for (std::size_t q = 0; q < a; ++q) {
      const double t = cache.activations[r * a + q];
      params.score.grad[q] += ds * t;
      du[q] = ds * params.score.value[q] * (1.0 - t * t);
      du_total[q] += du[q];
    }
    outer_accumulate(du, f.cell(r), params.feature_proj.grad);
    matvec_transpose_accumulate(params.feature_proj.value, du, grads.features.cell(r));
  }
  outer_accumulate(du_total, cache.event_hidden, params.event_proj.grad);
  matvec_transpose_accumulate(params.event_proj.value, du_total, grads.event_hidden);
  return grads;
}

ContextResult contextualize(const FeatureMap& features, const SpatialMap& error_map) {
  if (!features.same_grid(error_map)) {
    throw Error(ErrorCode::kShapeMismatch, "contextualize: error map grid differs from features");
  }
  ContextResult out;
  out.cache.features = features;
  out.cache.weights = softmax_spatial(error_map);
  out.posterior = FeatureMap(features.width(), features.height(), features.channels());
  for (std::size_t r = 0; r < features.cells(); ++r) {
    const auto src = features.cell(r);
    auto dst = out.posterior.cell(r);
    const double w = out.cache.weights[r];
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = w * src[k];
  }
  return out;
}

ContextGrads contextualize_backward(const ContextCache& cache, const FeatureMap& grad_posterior) {
  const FeatureMap& f = cache.features;
  if (!grad_posterior.same_shape(f)) {
    throw Error(ErrorCode::kStaleCache, "contextualize cotangent does not match cached grid");
  }
  ContextGrads grads{FeatureMap(f.width(), f.height(), f.channels()),
                     SpatialMap(f.width(), f.height())};
  std::vector<double> d_weight(f.cells());
  for (std::size_t r = 0; r < f.cells(); ++r) {
    const auto g = grad_posterior.cell(r);
    d_weight[r] = dot(g, f.cell(r));
    auto df = grads.features.cell(r);
    for (std::size_t k = 0; k < df.size(); ++k) df[k] = cache.weights[r] * g[k];
  }
  const auto d_err = softmax_backward(cache.weights.span(), d_weight);
  for (std::size_t r = 0; r < f.cells(); ++r) grads.error_map[r] = d_err[r];
  return grads;
}

ActorFeatureResult actor_feature(const FeatureMap& features, const FeatureMap& posterior) {
  if (!features.same_shape(posterior) || features.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "actor_feature: feature and posterior maps differ");
  }
  const std::size_t cells = features.cells();
  SpatialMap scores(features.width(), features.height());
  for (std::size_t r = 0; r < cells; ++r) scores[r] = dot(features.cell(r), posterior.cell(r));

  ActorFeatureResult out;
  out.cache.features = features;
  out.cache.posterior = posterior;
  out.cache.weights = softmax_spatial(scores);
  out.actor = Tensor::vector(features.channels());
  const double inv = 1.0 / static_cast<double>(cells);
  for (std::size_t r = 0; r < cells; ++r) {
    const auto p = posterior.cell(r);
    const double w = out.cache.weights[r] * inv;
    for (std::size_t k = 0; k < p.size(); ++k) out.actor[k] += w * p[k];
  }
  return out;
}

ActorFeatureGrads actor_feature_backward(const ActorFeatureCache& cache,
                                         std::span<const double> grad_actor) {
  const FeatureMap& f = cache.features;
  const FeatureMap& p = cache.posterior;
  if (grad_actor.size() != f.channels()) {
    throw Error(ErrorCode::kStaleCache, "actor_feature cotangent has the wrong length");
  }
  const std::size_t cells = f.cells();
  const double inv = 1.0 / static_cast<double>(cells);
  ActorFeatureGrads grads{FeatureMap(f.width(), f.height(), f.channels()),
                          FeatureMap(f.width(), f.height(), f.channels())};
  std::vector<double> d_weight(cells);
  for (std::size_t r = 0; r < cells; ++r) d_weight[r] = dot(p.cell(r), grad_actor) * inv;
  const auto d_score = softmax_backward(cache.weights.span(), d_weight);
  for (std::size_t r = 0; r < cells; ++r) {
    const auto fr = f.cell(r);
    const auto pr = p.cell(r);
    auto dfr = grads.features.cell(r);
    auto dpr = grads.posterior.cell(r);
    const double w = cache.weights[r] * inv;
    for (std::size_t k = 0; k < fr.size(); ++k) {
      dpr[k] = w * grad_actor[k] + d_score[r] * fr[k];
      dfr[k] = d_score[r] * pr[k];
    }
  }
  return grads;
}

}  // namespace pstream
