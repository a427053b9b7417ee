// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "panoavoid/tensor.hpp"

namespace panoavoid {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments for every parameter of one model, in parameter order.
struct OptimizerState {
  AdamWConfig config;
  double base_lr = 1e-3;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

template <class T>
OptimizerState make_optimizer_state(const std::vector<Tensor<T>*>& params, double base_lr,
                                    AdamWConfig config = {}) {
  OptimizerState s;
  s.config = config;
  s.base_lr = base_lr;
  for (const Tensor<T>* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

/// One decoupled-weight-decay Adam update, in place.
template <class T>
void adamw_step(const std::vector<Tensor<T>*>& params,
                const std::vector<std::vector<T>>& grads, OptimizerState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adamw_step: parameter/gradient/state count mismatch");
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k]->mutable_data();
    const auto& g = grads[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (g.size() != data.size() || m.size() != data.size()) {
      throw std::invalid_argument("adamw_step: gradient shape does not match parameter");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      const double p = static_cast<double>(data[i]);
      data[i] = static_cast<T>(p - lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p));
    }
  }
}

/// Cosine annealing from lr0 down to 1% of lr0 at total_steps.
inline double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  if (step < 0 || step > total_steps) {
    throw std::out_of_range("cosine_lr: step outside [0, total_steps]");
  }
  const double floor = 0.01 * lr0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return floor + 0.5 * (lr0 - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace panoavoid
