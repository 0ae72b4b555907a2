#pragma once

#include <cmath>
#include <cstdint>

#include "dva/tensor.hpp"

namespace dva {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamSet<T>& params) {
    return AdamState{params.zeros_like(), params.zeros_like(), 0};
  }
};

/// One bias-corrected Adam step. Rejects (throws, leaving everything
/// untouched) on layout mismatch or non-finite gradients.
template <class T>
void adam_update(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state,
                 const AdamConfig& cfg) {
  if (!params.same_layout(grads) || !params.same_layout(state.m) ||
      !params.same_layout(state.v)) {
    throw ShapeError("adam_update: gradient/state layout does not mirror parameters");
  }
  if (!grads.all_finite()) throw NumericError("adam_update: non-finite gradient");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.epsilon);

  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params.tensor(k).ptr();
    T* m = state.m.tensor(k).ptr();
    T* v = state.v.tensor(k).ptr();
    const T* g = grads.tensor(k).ptr();
    const std::size_t n = params.tensor(k).size();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T m_hat = m[i] * inv_bc1;
      const T v_hat = v[i] * inv_bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace dva
