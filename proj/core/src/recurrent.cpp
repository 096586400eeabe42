#include "pstream/recurrent.hpp"

#include <cmath>
#include <string>

namespace pstream {

void Param::init_uniform(std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : value.data()) v = dist(rng);
}

void Param::sgd_step(double lr) {
  auto& w = value.data();
  const auto& g = grad.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  ++version;
}

LstmCell::LstmCell(std::string name, std::size_t input_dim, std::size_t hidden_dim)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      weight_(name + ".weight", {4 * hidden_dim, input_dim + hidden_dim}),
      bias_(name + ".bias", {4 * hidden_dim}) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "LSTM dimensions must be positive");
  }
}

void LstmCell::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim_));
  weight_.init_uniform(rng, bound);
  bias_.init_uniform(rng, bound);
}

LstmStep LstmCell::forward(std::span<const double> x, const LstmState& state) const {
  if (x.size() != input_dim_ || state.hidden.size() != hidden_dim_ ||
      state.cell.size() != hidden_dim_) {
    throw Error(ErrorCode::kShapeMismatch,
                weight_.name + ": expected input " + std::to_string(input_dim_) + " and state " +
                    std::to_string(hidden_dim_) + ", got input " + std::to_string(x.size()));
  }
  const std::size_t n = hidden_dim_;
  LstmStep step;
  LstmCache& cache = step.cache;
  cache.input_dim = input_dim_;
  cache.hidden_dim = n;
  cache.version = weight_.version + bias_.version;
  cache.input.resize(input_dim_ + n);
  std::copy(x.begin(), x.end(), cache.input.begin());
  std::copy(state.hidden.data().begin(), state.hidden.data().end(),
            cache.input.begin() + static_cast<std::ptrdiff_t>(input_dim_));
  cache.cell_prev = state.cell.data();

  cache.gates.resize(4 * n);
  matvec(weight_.value, cache.input, bias_.value.span(), cache.gates);
  for (std::size_t q = 0; q < 3 * n; ++q) cache.gates[q] = sigmoid(cache.gates[q]);
  for (std::size_t q = 3 * n; q < 4 * n; ++q) cache.gates[q] = std::tanh(cache.gates[q]);

  step.state = LstmState::zeros(n);
  cache.cell_tanh.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    const double in = cache.gates[u];
    const double forget = cache.gates[n + u];
    const double out = cache.gates[2 * n + u];
    const double cand = cache.gates[3 * n + u];
    const double c = forget * cache.cell_prev[u] + in * cand;
    step.state.cell[u] = c;
    cache.cell_tanh[u] = std::tanh(c);
    step.state.hidden[u] = out * cache.cell_tanh[u];
  }
  ensure_finite(step.state.cell.span(), weight_.name + " cell state");
  ensure_finite(step.state.hidden.span(), weight_.name + " hidden state");
  return step;
}

LstmInputGrads LstmCell::backward(const LstmCache& cache, std::span<const double> grad_hidden,
                                  std::span<const double> grad_cell) {
  if (cache.input_dim != input_dim_ || cache.hidden_dim != hidden_dim_) {
    throw Error(ErrorCode::kStaleCache, weight_.name + ": cache dims do not match cell");
  }
  if (cache.version != weight_.version + bias_.version) {
    throw Error(ErrorCode::kStaleCache, weight_.name + ": parameters changed since forward pass");
  }
  const std::size_t n = hidden_dim_;
  std::vector<double> grad_pre(4 * n);
  LstmInputGrads grads;
  grads.cell.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    const double in = cache.gates[u];
    const double forget = cache.gates[n + u];
    const double out = cache.gates[2 * n + u];
    const double cand = cache.gates[3 * n + u];
    const double tc = cache.cell_tanh[u];
    const double dh = grad_hidden[u];
    const double dc = grad_cell[u] + dh * out * (1.0 - tc * tc);
    grad_pre[u] = dc * cand * in * (1.0 - in);
    grad_pre[n + u] = dc * cache.cell_prev[u] * forget * (1.0 - forget);
    grad_pre[2 * n + u] = dh * tc * out * (1.0 - out);
    grad_pre[3 * n + u] = dc * in * (1.0 - cand * cand);
    grads.cell[u] = dc * forget;
  }
  outer_accumulate(grad_pre, cache.input, weight_.grad);
  for (std::size_t q = 0; q < 4 * n; ++q) bias_.grad[q] += grad_pre[q];

  std::vector<double> grad_input(input_dim_ + n, 0.0);
  matvec_transpose_accumulate(weight_.value, grad_pre, grad_input);
  grads.input.assign(grad_input.begin(), grad_input.begin() + static_cast<std::ptrdiff_t>(input_dim_));
  grads.hidden.assign(grad_input.begin() + static_cast<std::ptrdiff_t>(input_dim_), grad_input.end());
  return grads;
}

Linear::Linear(std::string name, std::size_t input_dim, std::size_t output_dim)
    : input_dim_(input_dim),
      output_dim_(output_dim),
      weight_(name + ".weight", {output_dim, input_dim}),
      bias_(name + ".bias", {output_dim}) {}

void Linear::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim_));
  weight_.init_uniform(rng, bound);
  bias_.init_uniform(rng, bound);
}

std::vector<double> Linear::forward(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw Error(ErrorCode::kShapeMismatch, weight_.name + ": input has " +
                                               std::to_string(x.size()) + " entries, expected " +
                                               std::to_string(input_dim_));
  }
  std::vector<double> y(output_dim_);
  matvec(weight_.value, x, bias_.value.span(), y);
  return y;
}

std::vector<double> Linear::backward(std::span<const double> x, std::span<const double> grad_y) {
  outer_accumulate(grad_y, x, weight_.grad);
  for (std::size_t r = 0; r < output_dim_; ++r) bias_.grad[r] += grad_y[r];
  std::vector<double> grad_x(input_dim_, 0.0);
  matvec_transpose_accumulate(weight_.value, grad_y, grad_x);
  return grad_x;
}

EventState EventState::zeros(std::size_t depth, std::size_t hidden_dim) {
  EventState s;
  s.layers.assign(depth, LstmState::zeros(hidden_dim));
  s.event_repr = Tensor::vector(hidden_dim);
  return s;
}

PredictionStack::PredictionStack(std::size_t feature_dim, std::size_t hidden_dim,
                                 std::size_t depth)
    : feature_dim_(feature_dim), hidden_dim_(hidden_dim) {
  if (depth == 0) throw Error(ErrorCode::kInvalidArgument, "stack depth must be at least 1");
  for (std::size_t l = 0; l < depth; ++l) {
    layers_.emplace_back("stack." + std::to_string(l), l == 0 ? feature_dim : hidden_dim,
                         hidden_dim);
  }
  if (hidden_dim != feature_dim) projection_.emplace("stack.projection", hidden_dim, feature_dim);
}

void PredictionStack::init(std::mt19937_64& rng) {
  for (auto& layer : layers_) layer.init(rng);
  if (projection_) projection_->init(rng);
}

void PredictionStack::collect(ParamList& out) {
  for (auto& layer : layers_) layer.collect(out);
  if (projection_) projection_->collect(out);
}

StackForward stack_forward(const PredictionStack& stack, const FeatureMap& event_map,
                           const EventState& state) {
  if (event_map.channels() != stack.feature_dim()) {
    throw Error(ErrorCode::kShapeMismatch,
                "event map has " + std::to_string(event_map.channels()) +
                    " channels but the stack consumes " + std::to_string(stack.feature_dim()));
  }
  if (state.depth() != stack.depth()) {
    throw Error(ErrorCode::kShapeMismatch, "event state depth does not match stack depth");
  }
  const std::size_t depth = stack.depth();
  const std::size_t cells = event_map.cells();

  StackForward out;
  out.prediction = FeatureMap(event_map.width(), event_map.height(), event_map.channels());
  out.state = state;
  out.cache.width = event_map.width();
  out.cache.height = event_map.height();
  out.cache.depth = depth;
  out.cache.steps.reserve(cells * depth);
  if (stack.has_projection()) out.cache.top_hidden.reserve(cells);

  for (std::size_t r = 0; r < cells; ++r) {
    std::span<const double> x = event_map.cell(r);
    for (std::size_t l = 0; l < depth; ++l) {
      LstmStep step = stack.layers()[l].forward(x, out.state.layers[l]);
      out.state.layers[l] = std::move(step.state);
      out.cache.steps.push_back(std::move(step.cache));
      x = out.state.layers[l].hidden.span();
    }
    auto dst = out.prediction.cell(r);
    if (const Linear* proj = stack.projection()) {
      out.cache.top_hidden.emplace_back(x.begin(), x.end());
      const auto y = proj->forward(x);
      std::copy(y.begin(), y.end(), dst.begin());
    } else {
      std::copy(x.begin(), x.end(), dst.begin());
    }
  }
  out.state.event_repr = out.state.layers.back().hidden;
  return out;
}

FeatureMap stack_backward(PredictionStack& stack, const StackCache& cache,
                          const FeatureMap& grad_prediction) {
  if (cache.depth != stack.depth() || grad_prediction.width() != cache.width ||
      grad_prediction.height() != cache.height ||
      cache.steps.size() != cache.width * cache.height * cache.depth) {
    throw Error(ErrorCode::kStaleCache, "stack cache does not match the gradient grid");
  }
  const std::size_t depth = stack.depth();
  const std::size_t n = stack.hidden_dim();
  const std::size_t cells = cache.width * cache.height;

  FeatureMap grad_input(cache.width, cache.height, stack.feature_dim());
  std::vector<std::vector<double>> carry_h(depth, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> carry_c(depth, std::vector<double>(n, 0.0));

  for (std::size_t r = cells; r-- > 0;) {
    std::vector<double> grad_out;
    if (Linear* proj = stack.projection()) {
      grad_out = proj->backward(cache.top_hidden[r], grad_prediction.cell(r));
    } else {
      const auto g = grad_prediction.cell(r);
      grad_out.assign(g.begin(), g.end());
    }
    for (std::size_t l = depth; l-- > 0;) {
      for (std::size_t u = 0; u < n; ++u) grad_out[u] += carry_h[l][u];
      auto grads = stack.layers()[l].backward(cache.steps[r * depth + l], grad_out, carry_c[l]);
      carry_h[l] = std::move(grads.hidden);
      carry_c[l] = std::move(grads.cell);
      grad_out = std::move(grads.input);
    }
    auto dst = grad_input.cell(r);
    std::copy(grad_out.begin(), grad_out.end(), dst.begin());
  }
  return grad_input;
}

}  // namespace pstream
