#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "heteroiot/tensor.hpp"

namespace hiot {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter moment buffers; sized lazily on the first step.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
/// Throws GraphError if a parameter has no gradient, ShapeError if the
/// state was built for differently shaped parameters.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace hiot
