#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csic/tensor.hpp"

namespace csic {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for Adam, shaped like the parameters they track.
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  OptimizerState() = default;
  OptimizerState(AdamConfig cfg, std::span<const Tensor* const> params);
};

/// One bias-corrected Adam update applied in place to `params`.
void adam_step(OptimizerState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads);

}  // namespace csic
