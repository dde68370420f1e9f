#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pixelvol/ndiff/nn.hpp"

namespace pixelvol::ndiff {

template <typename T>
struct AdamConfig {
  T lr = T(5e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// First/second moment buffers keyed by parameter name plus a shared step
// counter for bias correction.
template <typename T>
struct AdamState {
  std::unordered_map<std::string, std::vector<T>> m, v;
  int64_t t = 0;
};

// One Adam update over every trainable parameter. Parameters without a
// gradient entry step with g = 0 (moments decay, stale momentum applies),
// matching dense-optimizer semantics on sparse gradients.
template <typename T>
void adam_step(ParamStore<T>& params, const GradMap<T>& grads, AdamState<T>& state,
               const AdamConfig<T>& cfg) {
  state.t += 1;
  const T bc1 = T(1) - T(std::pow(double(cfg.beta1), double(state.t)));
  const T bc2 = T(1) - T(std::pow(double(cfg.beta2), double(state.t)));
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    const size_t n = size_t(e.value.size());
    std::vector<T>& m = state.m[e.name];
    std::vector<T>& v = state.v[e.name];
    if (m.empty()) m.assign(n, T(0));
    if (v.empty()) v.assign(n, T(0));
    if (m.size() != n || v.size() != n)
      throw std::invalid_argument("adam: state shape mismatch for " + e.name);
    auto git = grads.find(e.name);
    const T* g = nullptr;
    if (git != grads.end()) {
      if (git->second.size() != n)
        throw std::invalid_argument("adam: gradient shape mismatch for " + e.name);
      g = git->second.data();
    }
    std::vector<T> p = e.value.to_vector();
    for (size_t i = 0; i < n; ++i) {
      T gi = g ? g[i] : T(0);
      m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * gi * gi;
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (T(std::sqrt(double(vhat))) + cfg.eps);
    }
    e.value = Array<T>(e.value.shape(), std::move(p));
  }
}

}  // namespace pixelvol::ndiff
