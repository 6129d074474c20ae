#include "relcap/optim.hpp"

#include <cmath>

#include "relcap/errors.hpp"

namespace relcap::autodiff {

OptimizerState make_optimizer_state(std::span<const Tensor> params, AdamOptions options) {
  OptimizerState state;
  state.options = options;
  for (const auto& p : params) {
    state.shapes.push_back(p.shape());
    state.first_moment.emplace_back(p.size(), 0.0);
    state.second_moment.emplace_back(p.size(), 0.0);
  }
  return state;
}

void optimizer_step(std::span<Tensor> params, OptimizerState& state) {
  if (params.size() != state.shapes.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " params but state tracks " +
                     std::to_string(state.shapes.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != state.shapes[i]) {
      throw ShapeError("optimizer_step: param " + std::to_string(i) + " has shape " +
                       to_string(params[i].shape()) + ", state expects " + to_string(state.shapes[i]));
    }
  }
  state.step += 1;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      // Zero gradient still decays the moments.
      for (auto& m : state.first_moment[i]) m *= o.beta1;
      for (auto& v : state.second_moment[i]) v *= o.beta2;
    }
    auto w = params[i].mutable_data();
    auto g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (g.empty()) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] -= o.learning_rate * (m[j] / correction1) / (std::sqrt(v[j] / correction2) + o.epsilon);
      }
      continue;
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      w[j] -= o.learning_rate * (m[j] / correction1) / (std::sqrt(v[j] / correction2) + o.epsilon);
    }
  }
}

}  // namespace relcap::autodiff
