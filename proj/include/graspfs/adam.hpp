#pragma once

#include <cstdint>
#include <string>

#include "graspfs/tensor.hpp"

namespace graspfs {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for one parameter block.
struct AdamState {
  std::uint64_t step_count = 0;
  Tensor first_moment;
  Tensor second_moment;

  static AdamState for_shape(const Shape& shape);
};

// One bias-corrected Adam update of `params` in place. Throws NumericError
// naming `block` when a gradient entry is not finite, before anything is
// modified.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state, const AdamConfig& config,
               const std::string& block = "params");

}  // namespace graspfs
