#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cbgt/errors.hpp"
#include "cbgt/numerics/param_store.hpp"

namespace cbgt::numerics {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const ParamStore<T>& store, AdamConfig cfg) : config(cfg) {
    for (const auto& e : store) {
      first_moment.emplace_back(e.value.shape());
      second_moment.emplace_back(e.value.shape());
    }
  }
};

/// One bias-corrected Adam update of every trainable entry. Gradients are
/// left untouched; callers clear them.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state) {
  if (state.first_moment.size() != store.size() || state.second_moment.size() != store.size()) {
    throw InternalError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                        " tensors, store has " + std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& shape = store.value(i).shape();
    if (state.first_moment[i].shape() != shape || state.second_moment[i].shape() != shape) {
      throw InternalError("optimizer state shape mismatch for " + store.entry(i).name);
    }
  }

  ++state.step;
  const auto& c = state.config;
  const double step = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, step));
  const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, step));
  const T lr = static_cast<T>(c.learning_rate);
  const T eps = static_cast<T>(c.epsilon);

  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& entry = store.entry(i);
    if (!entry.trainable) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < entry.value.size(); ++k) {
      const T g = entry.grad[k];
      m[k] = b1 * m[k] + (T{1} - b1) * g;
      v[k] = b2 * v[k] + (T{1} - b2) * g * g;
      const T m_hat = m[k] / correction1;
      const T v_hat = v[k] / correction2;
      entry.value[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace cbgt::numerics
