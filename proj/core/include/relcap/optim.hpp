#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "relcap/tensor.hpp"

namespace relcap::autodiff {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer state: one first/second moment buffer per
/// parameter, in parameter order.
struct OptimizerState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

OptimizerState make_optimizer_state(std::span<const Tensor> params, AdamOptions options = {});

/// Bias-corrected Adam update using each parameter's accumulated gradient
/// (a parameter without a gradient is treated as having zero gradient).
/// Throws ShapeError if params do not line up with the state.
void optimizer_step(std::span<Tensor> params, OptimizerState& state);

}  // namespace relcap::autodiff
