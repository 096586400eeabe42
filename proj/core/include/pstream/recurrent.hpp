#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pstream/numerics.hpp"
#include "pstream/param.hpp"

namespace pstream {

struct LstmState {
  Tensor hidden;
  Tensor cell;

  static LstmState zeros(std::size_t hidden_dim) {
    return {Tensor::vector(hidden_dim), Tensor::vector(hidden_dim)};
  }
};

// Activations retained by LstmCell::forward for the matching backward call.
struct LstmCache {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::uint64_t version = 0;     // weight + bias versions at forward time
  std::vector<double> input;     // [x; h_prev]
  std::vector<double> gates;     // i, f, o (sigmoid) then g (tanh), each hidden_dim
  std::vector<double> cell_prev;
  std::vector<double> cell_tanh; // tanh(c')
};

struct LstmStep {
  LstmState state;  // state.hidden is the cell output y
  LstmCache cache;
};

struct LstmInputGrads {
  std::vector<double> input;
  std::vector<double> hidden;
  std::vector<double> cell;
};

// Vanilla LSTM. Gate pre-activations are W [x; h] + b with the four gate
// blocks stacked in the order input, forget, output, candidate.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::string name, std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }

  // Uniform in [-1/sqrt(hidden_dim), 1/sqrt(hidden_dim)].
  void init(std::mt19937_64& rng);

  LstmStep forward(std::span<const double> x, const LstmState& state) const;

  // Accumulates weight gradients (+=) and returns gradients for the inputs.
  LstmInputGrads backward(const LstmCache& cache, std::span<const double> grad_hidden,
                          std::span<const double> grad_cell);

  Param& weight() noexcept { return weight_; }
  Param& bias() noexcept { return bias_; }
  const Param& weight() const noexcept { return weight_; }
  const Param& bias() const noexcept { return bias_; }
  void collect(ParamList& out) { out.push_back(&weight_); out.push_back(&bias_); }

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  Param weight_;
  Param bias_;
};

// y = W x + b.
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t input_dim, std::size_t output_dim);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }

  void init(std::mt19937_64& rng);
  std::vector<double> forward(std::span<const double> x) const;
  // `x` is the input of the matching forward call.
  std::vector<double> backward(std::span<const double> x, std::span<const double> grad_y);

  Param& weight() noexcept { return weight_; }
  Param& bias() noexcept { return bias_; }
  const Param& weight() const noexcept { return weight_; }
  const Param& bias() const noexcept { return bias_; }
  void collect(ParamList& out) { out.push_back(&weight_); out.push_back(&bias_); }

 private:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  Param weight_;
  Param bias_;
};

// Per-layer recurrent states plus the event representation (top hidden).
struct EventState {
  std::vector<LstmState> layers;
  Tensor event_repr;

  static EventState zeros(std::size_t depth, std::size_t hidden_dim);
  std::size_t depth() const noexcept { return layers.size(); }
};

// Hierarchical next-frame predictor: `depth` LSTM layers run over the grid
// cells in raster order, each layer feeding the next. When the hidden size
// differs from the feature size, a linear projection maps the top hidden
// back into feature space.
class PredictionStack {
 public:
  PredictionStack() = default;
  PredictionStack(std::size_t feature_dim, std::size_t hidden_dim, std::size_t depth);

  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  bool has_projection() const noexcept { return projection_.has_value(); }

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  std::vector<LstmCell>& layers() noexcept { return layers_; }
  const std::vector<LstmCell>& layers() const noexcept { return layers_; }
  Linear* projection() noexcept { return projection_ ? &*projection_ : nullptr; }
  const Linear* projection() const noexcept { return projection_ ? &*projection_ : nullptr; }

 private:
  std::size_t feature_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::vector<LstmCell> layers_;
  std::optional<Linear> projection_;
};

struct StackCache {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t depth = 0;
  std::vector<LstmCache> steps;                 // index cell * depth + layer
  std::vector<std::vector<double>> top_hidden;  // per cell, input of the projection
};

struct StackForward {
  FeatureMap prediction;
  EventState state;
  StackCache cache;
};

StackForward stack_forward(const PredictionStack& stack, const FeatureMap& event_map,
                           const EventState& state);

// Backpropagates through one frame's raster sweep. States entering the frame
// are treated as constants. Returns the gradient with respect to event_map.
FeatureMap stack_backward(PredictionStack& stack, const StackCache& cache,
                          const FeatureMap& grad_prediction);

}  // namespace pstream
