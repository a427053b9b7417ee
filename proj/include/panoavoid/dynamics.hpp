// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Point-mass model with a first-order lag from commanded to realized
// acceleration. The onboard velocity controller is assumed to cancel gravity.
//
//   u_w   = Rz(yaw) sat(u_body, v_max)
//   a_des = sat((u_w - v) / tau_v, a_max)
//   a'    = a + dt / tau_att (a_des - a)
//   v'    = v + dt a'
//   p'    = p + dt v'
//
// sat is the smooth norm limiter x s tanh(|x|/s) / |x|.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "panoavoid/geometry.hpp"
#include "panoavoid/ops.hpp"
#include "panoavoid/random.hpp"
#include "panoavoid/tensor.hpp"

namespace panoavoid {

struct SimConfig {
  double dt_mean = 1.0 / 15.0;
  double dt_std = 0.1 / 15.0;
  double dt_min_factor = 0.5;
  double dt_max_factor = 1.5;
  double tau_v = 0.3;
  double tau_att = 0.15;
  double a_max = 10.0;
  double v_max = 6.0;

  void validate() const {
    if (!(dt_mean > 0) || dt_std < 0) throw std::invalid_argument("sim: need dt_mean > 0, dt_std >= 0");
    if (!(dt_min_factor > 0) || dt_max_factor < dt_min_factor) {
      throw std::invalid_argument("sim: need 0 < dt_min_factor <= dt_max_factor");
    }
    if (!(tau_v > 0) || !(tau_att > 0)) throw std::invalid_argument("sim: time constants must be > 0");
    if (!(a_max > 0) || !(v_max > 0)) throw std::invalid_argument("sim: a_max and v_max must be > 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimConfig, dt_mean, dt_std, dt_min_factor,
                                                dt_max_factor, tau_v, tau_att, a_max, v_max)

struct UavState {
  Vec3 p;
  Vec3 v;
  Vec3 a;  // realized acceleration
  double yaw = 0.0;
};

/// The same state as differentiable [3] tensors.
template <class T>
struct TensorState {
  Tensor<T> p, v, a;
  double yaw = 0.0;

  static TensorState from(const UavState& s) {
    return {Tensor<T>::vec3(T(s.p.x), T(s.p.y), T(s.p.z)),
            Tensor<T>::vec3(T(s.v.x), T(s.v.y), T(s.v.z)),
            Tensor<T>::vec3(T(s.a.x), T(s.a.y), T(s.a.z)), s.yaw};
  }
  UavState value() const {
    auto vec = [](const Tensor<T>& t) { return Vec3{double(t[0]), double(t[1]), double(t[2])}; };
    return {vec(p), vec(v), vec(a), yaw};
  }
  TensorState detached() const { return {p.detach(), v.detach(), a.detach(), yaw}; }
};

inline double sample_dt(const SimConfig& cfg, Rng& rng) {
  if (cfg.dt_std == 0) return cfg.dt_mean;
  return std::clamp(gaussian(rng, cfg.dt_mean, cfg.dt_std), cfg.dt_min_factor * cfg.dt_mean,
                    cfg.dt_max_factor * cfg.dt_mean);
}

/// Rotation of a [3] tensor about z by psi.
template <class T>
Tensor<T> rotate_z(const Tensor<T>& x, double psi) {
  const auto m = yaw_matrix(psi);
  std::vector<T> w(m.begin(), m.end());
  return linear(x, Tensor<T>(Shape{3, 3}, std::move(w)));
}

template <class T>
TensorState<T> step(const TensorState<T>& s, const Tensor<T>& u_body, double dt,
                    const SimConfig& cfg) {
  if (u_body.size() != 3) throw ShapeError("step: command must have 3 components");
  if (!(dt > 0)) throw std::invalid_argument("step: dt must be > 0");
  const T dtt = static_cast<T>(dt);
  const Tensor<T> u_world = rotate_z(smooth_clip_norm(u_body, T(cfg.v_max)), s.yaw);
  const Tensor<T> a_des =
      smooth_clip_norm(scale(sub(u_world, s.v), T(1.0 / cfg.tau_v)), T(cfg.a_max));
  TensorState<T> n;
  n.yaw = s.yaw;
  n.a = add(s.a, scale(sub(a_des, s.a), static_cast<T>(dt / cfg.tau_att)));
  n.v = add(s.v, scale(n.a, dtt));
  n.p = add(s.p, scale(n.v, dtt));
  return n;
}

inline UavState step(const UavState& s, const Vec3& u_body, double dt, const SimConfig& cfg) {
  NoGradScope<double> off;
  return step(TensorState<double>::from(s), Tensor<double>::vec3(u_body.x, u_body.y, u_body.z),
              dt, cfg)
      .value();
}

}  // namespace panoavoid
