#pragma once

#include <random>
#include <span>
#include <vector>

#include "pstream/numerics.hpp"
#include "pstream/param.hpp"

namespace pstream {

// Additive attention over grid cells:
//   score(r) = v^T tanh(P_f f[r] + P_h h_event)
class AttentionParams {
 public:
  AttentionParams() = default;
  AttentionParams(std::size_t feature_dim, std::size_t event_dim, std::size_t attention_dim);

  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t event_dim() const noexcept { return event_dim_; }
  std::size_t attention_dim() const noexcept { return attention_dim_; }

  void init(std::mt19937_64& rng);
  void collect(ParamList& out) {
    out.push_back(&feature_proj);
    out.push_back(&event_proj);
    out.push_back(&score);
  }

  Param feature_proj;  // attention_dim x feature_dim
  Param event_proj;    // attention_dim x event_dim
  Param score;         // attention_dim

 private:
  std::size_t feature_dim_ = 0;
  std::size_t event_dim_ = 0;
  std::size_t attention_dim_ = 0;
};

struct AttendCache {
  std::uint64_t version = 0;
  FeatureMap features;
  std::vector<double> event_hidden;
  std::vector<double> activations;  // tanh(u) per cell, cells x attention_dim
  SpatialMap alpha;
};

struct AttendResult {
  SpatialMap alpha;
  FeatureMap event_map;
  AttendCache cache;
};

AttendResult attend(const AttentionParams& params, const FeatureMap& features,
                    std::span<const double> event_hidden);

struct AttendGrads {
  FeatureMap features;
  std::vector<double> event_hidden;
};

// `grad_alpha` is any cotangent reaching alpha directly; `grad_event_map`
// is the cotangent of the attention-weighted map. Parameter gradients
// accumulate into `params`.
AttendGrads attend_backward(AttentionParams& params, const AttendCache& cache,
                            std::span<const double> grad_alpha, const FeatureMap& grad_event_map);

struct ContextCache {
  FeatureMap features;
  SpatialMap weights;  // softmax of the error map
};

struct ContextResult {
  FeatureMap posterior;
  ContextCache cache;
};

// posterior[r] = softmax(error)[r] * features[r]
ContextResult contextualize(const FeatureMap& features, const SpatialMap& error_map);

struct ContextGrads {
  FeatureMap features;
  SpatialMap error_map;
};

ContextGrads contextualize_backward(const ContextCache& cache, const FeatureMap& grad_posterior);

struct ActorFeatureCache {
  FeatureMap features;
  FeatureMap posterior;
  SpatialMap weights;  // softmax over per-cell <features, posterior>
};

struct ActorFeatureResult {
  Tensor actor;
  ActorFeatureCache cache;
};

// Dot-product attention pooling:
//   w = softmax_r(<f[r], F[r]>),  actor = mean_r(w[r] * F[r])
ActorFeatureResult actor_feature(const FeatureMap& features, const FeatureMap& posterior);

struct ActorFeatureGrads {
  FeatureMap features;
  FeatureMap posterior;
};

ActorFeatureGrads actor_feature_backward(const ActorFeatureCache& cache,
                                         std::span<const double> grad_actor);

}  // namespace pstream
