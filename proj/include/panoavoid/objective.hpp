// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "json.hpp"

#include "panoavoid/geometry.hpp"
#include "panoavoid/ops.hpp"
#include "panoavoid/tensor.hpp"

namespace panoavoid {

struct LossConfig {
  double w_trk = 1.0;
  double w_avoid = 1.5;
  double w_collide = 2.0;
  double gamma = 32.0;
  double w_acc = 0.01;
  double w_jerk = 0.001;
  double w_vpred = 2.0;
  double safety_margin = 0.2;      // m
  double v_max_target = 3.0;       // m/s
  double target_horizon = 1.0;     // s
  std::size_t window = 30;         // velocity moving-average length
  double smooth_l1_beta = 1.0;
  double approach_sharpness = 10.0;
  double dt_nominal = 1.0 / 15.0;  // differencing step for acc / jerk

  void validate() const {
    for (double w : {w_trk, w_avoid, w_collide, w_acc, w_jerk, w_vpred}) {
      if (w < 0) throw std::invalid_argument("loss: weights must be >= 0");
    }
    if (!(gamma > 0)) throw std::invalid_argument("loss: gamma must be > 0");
    if (window < 1) throw std::invalid_argument("loss: window must be >= 1");
    if (!(v_max_target > 0) || !(target_horizon > 0) || !(dt_nominal > 0) ||
        !(smooth_l1_beta > 0) || !(approach_sharpness > 0)) {
      throw std::invalid_argument("loss: scales must be > 0");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossConfig, w_trk, w_avoid, w_collide, gamma,
                                                w_acc, w_jerk, w_vpred, safety_margin,
                                                v_max_target, target_horizon, window,
                                                smooth_l1_beta, approach_sharpness, dt_nominal)

/// Per-step terms as differentiable scalars.
template <class T>
struct LossTerms {
  Tensor<T> trk, avoid, collide, acc, jerk, vpred;
};

/// Plain values for logging.
struct LossBreakdown {
  double trk = 0, avoid = 0, collide = 0, acc = 0, jerk = 0, vpred = 0, total = 0;
};

/// Velocity towards the goal reached in `target_horizon`, limited in norm.
template <class T>
Tensor<T> target_velocity(const Tensor<T>& p, const Vec3& goal, const LossConfig& cfg) {
  const Tensor<T> g = Tensor<T>::vec3(T(goal.x), T(goal.y), T(goal.z));
  return clip_norm(scale(sub(g, p), static_cast<T>(1.0 / cfg.target_horizon)),
                   static_cast<T>(cfg.v_max_target));
}

/// SmoothL1 per component of (mean(history) - v_star), summed. The history
/// holds the most recent executed velocities, at most `window` of them.
template <class T>
Tensor<T> tracking_loss(const std::vector<Tensor<T>>& history, const Tensor<T>& v_star,
                        const LossConfig& cfg) {
  if (history.empty()) throw std::invalid_argument("tracking_loss: empty velocity history");
  if (history.size() > cfg.window) throw std::invalid_argument("tracking_loss: history exceeds window");
  Tensor<T> acc = history[0];
  for (std::size_t i = 1; i < history.size(); ++i) acc = add(acc, history[i]);
  const Tensor<T> mean_v = scale(acc, T(1) / static_cast<T>(history.size()));
  return sum(smooth_l1(sub(mean_v, v_star), static_cast<T>(cfg.smooth_l1_beta)));
}

/// Smoothed positive part of the closing speed along `dir` (unit, towards
/// the nearest surface). `v_obstacle` is that surface's own velocity.
template <class T>
Tensor<T> approach_speed(const Tensor<T>& v, const Tensor<T>& dir, const Vec3& v_obstacle,
                         const LossConfig& cfg) {
  const Tensor<T> rel = sub(v, Tensor<T>::vec3(T(v_obstacle.x), T(v_obstacle.y), T(v_obstacle.z)));
  return softplus(dot(rel, dir), static_cast<T>(cfg.approach_sharpness));
}

template <class T>
Tensor<T> approach_speed(const Tensor<T>& v, const Vec3& dir, const Vec3& v_obstacle,
                         const LossConfig& cfg) {
  return approach_speed(v, Tensor<T>::vec3(T(dir.x), T(dir.y), T(dir.z)), v_obstacle, cfg);
}

/// (avoid, collide) from raw clearance and a given approach speed.
template <class T>
std::pair<Tensor<T>, Tensor<T>> safety_losses_from_approach(const Tensor<T>& clearance_raw,
                                                            const Tensor<T>& v_to_pt,
                                                            const LossConfig& cfg) {
  const Tensor<T> d = add_scalar(clearance_raw, static_cast<T>(-cfg.safety_margin));
  const Tensor<T> gap = relu(add_scalar(neg(d), T(1)));  // (1 - d)+
  const Tensor<T> avoid = mul(square(gap), v_to_pt);
  const Tensor<T> collide = mul(softplus(scale(d, static_cast<T>(-cfg.gamma))), v_to_pt);
  return {avoid, collide};
}

/// `dir` is a Vec3 or a differentiable [3] tensor towards the closest surface.
template <class T, class Dir>
std::pair<Tensor<T>, Tensor<T>> safety_losses(const Tensor<T>& clearance_raw, const Dir& dir,
                                              const Tensor<T>& v, const Vec3& v_obstacle,
                                              const LossConfig& cfg) {
  return safety_losses_from_approach(clearance_raw, approach_speed(v, dir, v_obstacle, cfg), cfg);
}

/// Squared norms of the first and second command differences over the
/// nominal step. Missing history entries count as zero commands.
template <class T>
std::pair<Tensor<T>, Tensor<T>> smoothness_losses(const Tensor<T>& u, const Tensor<T>& u_prev,
                                                  const Tensor<T>& u_prev2, const LossConfig& cfg) {
  const T inv = static_cast<T>(1.0 / cfg.dt_nominal);
  const Tensor<T> a = scale(sub(u, u_prev), inv);
  const Tensor<T> j = scale(add(sub(u, scale(u_prev, T(2))), u_prev2), inv * inv);
  return {sum(square(a)), sum(square(j))};
}

/// ||v_hat - v||^2 with the target cut from the graph.
template <class T>
Tensor<T> vpred_loss(const Tensor<T>& v_hat, const Tensor<T>& v_executed) {
  return sum(square(sub(v_hat, v_executed.detach())));
}

template <class T>
Tensor<T> weighted_total(const LossTerms<T>& t, const LossConfig& cfg) {
  Tensor<T> total = scale(t.trk, static_cast<T>(cfg.w_trk));
  total = add(total, scale(t.avoid, static_cast<T>(cfg.w_avoid)));
  total = add(total, scale(t.collide, static_cast<T>(cfg.w_collide)));
  total = add(total, scale(t.acc, static_cast<T>(cfg.w_acc)));
  total = add(total, scale(t.jerk, static_cast<T>(cfg.w_jerk)));
  total = add(total, scale(t.vpred, static_cast<T>(cfg.w_vpred)));
  return total;
}

template <class T>
LossBreakdown breakdown(const LossTerms<T>& t, const LossConfig& cfg) {
  LossBreakdown b{double(t.trk.item()),  double(t.avoid.item()), double(t.collide.item()),
                  double(t.acc.item()),  double(t.jerk.item()),  double(t.vpred.item()), 0.0};
  b.total = cfg.w_trk * b.trk + cfg.w_avoid * b.avoid + cfg.w_collide * b.collide +
            cfg.w_acc * b.acc + cfg.w_jerk * b.jerk + cfg.w_vpred * b.vpred;
  return b;
}

/// Per-step weighted totals averaged over the rollout; components are
/// averaged the same way.
inline LossBreakdown total_loss(const std::vector<LossBreakdown>& steps, const LossConfig& cfg) {
  LossBreakdown m;
  if (steps.empty()) return m;
  for (const auto& s : steps) {
    m.trk += s.trk;
    m.avoid += s.avoid;
    m.collide += s.collide;
    m.acc += s.acc;
    m.jerk += s.jerk;
    m.vpred += s.vpred;
    m.total += cfg.w_trk * s.trk + cfg.w_avoid * s.avoid + cfg.w_collide * s.collide +
               cfg.w_acc * s.acc + cfg.w_jerk * s.jerk + cfg.w_vpred * s.vpred;
  }
  const double n = static_cast<double>(steps.size());
  m.trk /= n;
  m.avoid /= n;
  m.collide /= n;
  m.acc /= n;
  m.jerk /= n;
  m.vpred /= n;
  m.total /= n;
  return m;
}

}  // namespace panoavoid
