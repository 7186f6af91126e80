#include "csic/adam.hpp"

#include <cmath>

namespace csic {

OptimizerState::OptimizerState(AdamConfig cfg, std::span<const Tensor* const> params)
    : config(cfg) {
  require(cfg.learning_rate >= 0.0, ErrorKind::kConfig, "learning rate must be non-negative");
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const Tensor* p : params) {
    first_moment.emplace_back(p->shape());
    second_moment.emplace_back(p->shape());
  }
}

void adam_step(OptimizerState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    fail(ErrorKind::kShape, "adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const float b1 = static_cast<float>(c.beta1);
  const float b2 = static_cast<float>(c.beta2);
  const float corr1 = static_cast<float>(1.0 / (1.0 - std::pow(c.beta1, t)));
  const float corr2 = static_cast<float>(1.0 / (1.0 - std::pow(c.beta2, t)));
  const float lr = static_cast<float>(c.learning_rate);
  const float eps = static_cast<float>(c.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (g.shape() != p.shape() || m.shape() != p.shape()) {
      fail(ErrorKind::kShape, "adam_step: gradient shape " + shape_string(g.shape()) +
                                  " does not match parameter " + shape_string(p.shape()));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] * corr1;
      const float v_hat = v[j] * corr2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace csic
