#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace pstream {

// Hyperparameters shared by every run. Defaults are the reference settings;
// desk-scale tests shrink the hidden sizes.
struct RunConfig {
  std::size_t depth = 3;               // LSTM layers in the prediction stack
  std::size_t hidden_dim = 512;        // hidden size of every stack layer
  std::size_t attention_dim = 64;      // inner size of the additive attention
  std::size_t actor_hidden_dim = 512;  // hidden size of the two actor LSTMs
  std::size_t top_k = 5;               // attended grids per frame
  std::size_t max_boxes = 10;          // boxes emitted per frame
  double lambda1 = 1.0;                // event-loss weight
  double lambda2 = 1.0;                // object-loss weight
  double lr0 = 1e-10;
  double delta_minus = 1e-1;           // growth when the loss rises
  double delta_plus = 1e-2;            // decay when the loss falls
  double lr_min = 1e-14;
  double lr_max = 1e-2;
  double min_box_extent = 1e-3;        // lower clamp for predicted w and h
  bool feature_loss = true;
  bool geometry_loss = true;
  std::uint64_t seed = 0;

  bool operator==(const RunConfig&) const = default;
};

// Throws ErrorCode::kConfig on the first violated constraint.
void validate(const RunConfig& config);
void validate_for_grid(const RunConfig& config, std::size_t grid_width, std::size_t grid_height);

std::string to_json(const RunConfig& config, int indent = 2);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(std::string_view text);

}  // namespace pstream
