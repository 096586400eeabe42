#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pstream/numerics.hpp"

namespace pstream {

// A learnable tensor with its gradient buffer. `version` advances on every
// parameter update so that caches from earlier forward passes can be
// recognised as stale.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  std::uint64_t version = 0;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}

  void zero_grad() { grad.fill(0.0); }
  void init_uniform(std::mt19937_64& rng, double bound);
  // value -= lr * grad
  void sgd_step(double lr);
};

using ParamList = std::vector<Param*>;

}  // namespace pstream
