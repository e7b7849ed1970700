#pragma once

#include <cmath>
#include <cstdint>

#include "roadinspect/error.hpp"
#include "roadinspect/network.hpp"

namespace roadinspect {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

/// First/second moment estimates mirroring a parameter set.
template <typename T = float>
struct AdamState {
  std::uint64_t t = 0;
  nn::ParamSet<T> m, v;
  AdamConfig cfg;

  AdamState() = default;
  AdamState(const nn::ParamSet<T>& params, AdamConfig config)
      : m(nn::zeros_like(params)), v(nn::zeros_like(params)), cfg(config) {}
};

/// One bias-corrected Adam update; t is incremented before the update.
template <typename T>
void adam_step(AdamState<T>& state, nn::ParamSet<T>& params, const nn::ParamSet<T>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter, gradient and state layer counts differ");
  }
  ++state.t;
  const auto& c = state.cfg;
  const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));

  auto update = [&](BasicTensor<T>& theta, const BasicTensor<T>& g, BasicTensor<T>& m, BasicTensor<T>& v) {
    if (theta.shape() != g.shape() || theta.shape() != m.shape()) throw ShapeError("adam_step: shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / corr1;
      const double v_hat = vi / corr2;
      theta[i] = static_cast<T>(theta[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  };

  for (std::size_t l = 0; l < params.size(); ++l) {
    if (params[l].has_params() != grads[l].has_params()) throw ShapeError("adam_step: layer structure mismatch");
    if (!params[l].has_params()) continue;
    update(params[l].weight, grads[l].weight, state.m[l].weight, state.v[l].weight);
    update(params[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias);
  }
}

}  // namespace roadinspect
