#pragma once

#include <stdexcept>

#include "xfer/net.hpp"

namespace xfer {

inline ParameterVector zeros_like(const ParameterVector& params) {
  ParameterVector out;
  for (const auto& p : params.params) out.params.push_back({p.name, Tensor<float>(p.value.shape)});
  return out;
}

// Momentum SGD: v <- momentum * v + g; p <- p - learning_rate * v.
inline void sgd_step(ParameterVector& params, const ParameterVector& grads, double learning_rate,
                     double momentum, ParameterVector& velocity) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0,1)");
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw ShapeError("parameter/gradient/velocity count mismatch");
  }
  const auto lr = static_cast<float>(learning_rate);
  const auto mom = static_cast<float>(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != grads[i].name || params[i].value.shape != grads[i].value.shape ||
        params[i].value.shape != velocity[i].value.shape) {
      throw ShapeError("mismatched tensor in sgd_step at slot " + params[i].name);
    }
    float* p = params[i].value.ptr();
    const float* g = grads[i].value.ptr();
    float* v = velocity[i].value.ptr();
    const std::size_t n = params[i].value.size();
    for (std::size_t j = 0; j < n; ++j) {
      v[j] = mom * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

}  // namespace xfer
