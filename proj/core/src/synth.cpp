#include "pstream/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pstream/error.hpp"

namespace pstream {

VideoSequence synth_sequence(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.width < 2 || spec.height < 2) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic grid must be at least 2x2");
  }
  if (spec.channels == 0) throw Error(ErrorCode::kInvalidArgument, "channels must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t cells = spec.width * spec.height;
  const std::size_t d = spec.channels;
  std::vector<double> freq(d);
  std::vector<double> phase(cells * d);
  for (double& w : freq) w = 0.05 + 0.15 * unit(rng);
  for (double& p : phase) p = 2.0 * std::numbers::pi * unit(rng);

  const double cw = 1.0 / static_cast<double>(spec.width);
  const double ch = 1.0 / static_cast<double>(spec.height);
  auto pick = [&](std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n)));
  };

  std::size_t ai = pick(spec.width);
  std::size_t aj = pick(spec.height);

  VideoSequence seq;
  seq.video_id = spec.video_id;
  seq.label = spec.label;
  seq.width = spec.width;
  seq.height = spec.height;
  seq.channels = d;
  seq.frames.reserve(spec.frames);

  for (std::size_t t = 0; t < spec.frames; ++t) {
    if (spec.actor && t > 0 && unit(rng) < spec.move_probability) {
      auto step = [&](std::size_t pos, std::size_t extent) {
        const int delta = static_cast<int>(pick(3)) - 1;
        const auto next = static_cast<long>(pos) + delta;
        return static_cast<std::size_t>(std::clamp<long>(next, 0, static_cast<long>(extent) - 1));
      };
      ai = step(ai, spec.width);
      aj = step(aj, spec.height);
    }
    const std::size_t actor_cell = aj * spec.width + ai;

    FrameRecord frame;
    frame.index = t;
    frame.feature = FeatureMap(spec.width, spec.height, d);
    for (std::size_t r = 0; r < cells; ++r) {
      auto cell = frame.feature.cell(r);
      for (std::size_t k = 0; k < d; ++k) {
        cell[k] = spec.background_amplitude *
                  std::sin(freq[k] * static_cast<double>(t) + phase[r * d + k]);
      }
    }

    std::vector<BoundingBox> proposals;
    if (spec.actor) {
      auto cell = frame.feature.cell(actor_cell);
      for (double& v : cell) v = spec.actor_amplitude * gauss(rng);
      const BoundingBox gt{(static_cast<double>(ai) + 0.5) * cw, (static_cast<double>(aj) + 0.5) * ch,
                           cw, ch, std::nullopt};
      frame.gt_boxes.push_back(gt);
      BoundingBox prop = gt;
      prop.cx += (unit(rng) - 0.5) * 0.2 * cw;
      prop.cy += (unit(rng) - 0.5) * 0.2 * ch;
      prop.w *= 0.9 + 0.2 * unit(rng);
      prop.h *= 0.9 + 0.2 * unit(rng);
      prop.score = 0.3 + 0.7 * unit(rng);
      proposals.push_back(prop);
    }
    for (std::size_t n = 0; n < spec.distractors; ++n) {
      std::size_t r = pick(cells);
      if (spec.actor && r == actor_cell) r = (r + 1 + pick(cells - 1)) % cells;
      const double x0 = static_cast<double>(r % spec.width) * cw;
      const double y0 = static_cast<double>(r / spec.width) * ch;
      BoundingBox b;
      b.cx = x0 + unit(rng) * cw;
      b.cy = y0 + unit(rng) * ch;
      b.w = std::min(1.0, cw * (0.5 + 1.5 * unit(rng)));
      b.h = std::min(1.0, ch * (0.5 + 1.5 * unit(rng)));
      b.score = 0.01 + 0.99 * unit(rng);
      proposals.push_back(b);
    }
    std::shuffle(proposals.begin(), proposals.end(), rng);
    frame.proposals = std::move(proposals);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace pstream
