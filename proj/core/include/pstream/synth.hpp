#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "pstream/container.hpp"

namespace pstream {

// Desk-scale scene: every background cell follows its own smooth sinusoidal
// trajectory, while a single actor cell random-walks across the grid and
// carries freshly drawn features every frame. One proposal is emitted at the
// actor cell and `distractors` proposals elsewhere; the ground-truth box is
// the actor cell's extent.
struct SynthSpec {
  std::size_t width = 8;
  std::size_t height = 8;
  std::size_t channels = 16;
  std::size_t frames = 200;
  bool actor = true;
  std::size_t distractors = 5;
  double background_amplitude = 0.5;
  double actor_amplitude = 2.0;
  double move_probability = 0.6;
  std::string video_id = "synth";
  std::optional<std::int32_t> label;
};

VideoSequence synth_sequence(const SynthSpec& spec, std::uint64_t seed);

}  // namespace pstream
