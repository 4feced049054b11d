#include "graspfs/adam.hpp"

#include <cmath>

#include "graspfs/errors.hpp"

namespace graspfs {

AdamState AdamState::for_shape(const Shape& shape) {
  return {0, Tensor(shape), Tensor(shape)};
}

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, const AdamConfig& config,
               const std::string& block) {
  require_same_shape(params, grads, "adam step (" + block + ")");
  if (state.first_moment.empty()) state = AdamState::for_shape(params.shape());
  require_same_shape(params, state.first_moment, "adam first moment (" + block + ")");
  require_same_shape(params, state.second_moment, "adam second moment (" + block + ")");
  if (!(config.lr > 0 && config.beta1 > 0 && config.beta1 < 1 && config.beta2 > 0 &&
        config.beta2 < 1 && config.epsilon > 0)) {
    throw ConfigError("adam hyperparameters out of range");
  }
  if (!grads.all_finite()) {
    throw NumericError("non-finite gradient in parameter block '" + block + "'");
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  auto m = state.first_moment.data();
  auto v = state.second_moment.data();
  auto p = params.data();
  const auto g = grads.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

}  // namespace graspfs
