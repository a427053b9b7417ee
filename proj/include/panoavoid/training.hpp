// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "panoavoid/dynamics.hpp"
#include "panoavoid/objective.hpp"
#include "panoavoid/optim.hpp"
#include "panoavoid/policy.hpp"
#include "panoavoid/random.hpp"
#include "panoavoid/render.hpp"
#include "panoavoid/world.hpp"

namespace panoavoid {

enum class YawMode { fixed_random, free };

PANOAVOID_JSON_ENUM(YawMode, {{YawMode::fixed_random, "fixed_random"},
                                       {YawMode::free, "free"}})

inline constexpr double kFreeYawMinSpeed = 0.1;

/// Raised when the simulated state stops being finite.
class RolloutDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// fixed_random: one uniform draw for the whole episode. free: the heading
/// of the horizontal velocity, holding `previous` when nearly stationary.
inline double sample_episode_yaw(YawMode mode, Rng& rng, const Vec3& velocity = {},
                                 double previous = 0.0) {
  if (mode == YawMode::fixed_random) return uniform(rng, 0.0, 2.0 * std::numbers::pi);
  if (std::hypot(velocity.x, velocity.y) < kFreeYawMinSpeed) return previous;
  return std::atan2(velocity.y, velocity.x);
}

/// Depth input for the policy's camera set, seen from p with heading yaw.
template <class T>
Tensor<T> render_observation(const PolicySpec& spec, const Scene& scene, const Vec3& p,
                             double yaw, double d_max, double noise_gamma = 0.0,
                             Rng* noise_rng = nullptr) {
  std::vector<DepthImage> views;
  const int f = static_cast<int>(spec.supersample);
  const int h = static_cast<int>(spec.in_h) * f, w = static_cast<int>(spec.in_w) * f;
  switch (spec.variant) {
    case PolicyVariant::panoramic:
      views.push_back(render_equirect(scene, p, yaw, {h, w}, d_max));
      break;
    case PolicyVariant::forward:
      views.push_back(render_pinhole(scene, p, yaw, spec.fov, h, w, d_max));
      break;
    case PolicyVariant::multiview:
      if (spec.in_channels == 6) {
        views = render_cubefaces(scene, p, yaw, h, d_max);
      } else {
        for (CubeFace f : {CubeFace::front, CubeFace::right, CubeFace::back, CubeFace::left}) {
          views.push_back(render_cubeface(scene, p, yaw, f, h, d_max));
        }
      }
      break;
  }
  if (f > 1) {
    for (auto& v : views) v = min_pool(v, f);
  }
  if (noise_gamma > 0) {
    if (noise_rng == nullptr) throw std::invalid_argument("render_observation: noise needs an rng");
    for (auto& v : views) v = add_noise(v, noise_gamma, *noise_rng);
  }
  return normalize_for_net<T>(views, d_max);
}

/// Everything one control step produced.
template <class T>
struct StepOutcome {
  LossTerms<T> terms;
  Tensor<T> total;
  LossBreakdown loss;
  Vec3 u_body;
  Vec3 v_hat;
  ClearanceResult clearance;
  bool collision = false;
  Tensor<T> depth;  // the policy's visual input
};

/// Closed-loop policy + dynamics + loss evaluation shared by training and
/// evaluation. The policy sees only rendered depth and the observation vector.
template <class T>
class ClosedLoop {
 public:
  ClosedLoop(const PolicyParams<T>& params, const SimConfig& sim, const LossConfig& loss,
             double r_uav, double d_max, const UavState& start)
      : params_(params),
        sim_(sim),
        loss_(loss),
        r_uav_(r_uav),
        d_max_(d_max),
        state_(TensorState<T>::from(start)),
        hidden_(zero_hidden<T>(params.spec)),
        u_prev_(Shape{3}, T(0)),
        u_prev2_(Shape{3}, T(0)) {}

  const TensorState<T>& state() const { return state_; }
  UavState value() const { return state_.value(); }

  /// Cuts every carried quantity from the graph (truncated BPTT boundary).
  void detach_carry() {
    state_ = state_.detached();
    hidden_ = hidden_.detach();
    u_prev_ = u_prev_.detach();
    u_prev2_ = u_prev2_.detach();
    for (auto& v : v_hist_) v = v.detach();
  }

  /// Flies one step with heading `yaw` towards `goal`; obstacles advance
  /// by the same dt around the new UAV position.
  StepOutcome<T> advance(Scene& scene, const Vec3& goal, double yaw, double dt, Rng& world_rng,
                         double noise_gamma = 0.0, Rng* noise_rng = nullptr) {
    const Tensor<T> depth = render_observation<T>(params_.spec, scene, state_.value().p, yaw,
                                                  d_max_, noise_gamma, noise_rng);
    return advance_with_depth(depth, scene, goal, yaw, dt, world_rng);
  }

  /// As advance, but the policy sees `depth` instead of a fresh render.
  StepOutcome<T> advance_with_depth(const Tensor<T>& depth, Scene& scene, const Vec3& goal,
                                    double yaw, double dt, Rng& world_rng) {
    state_.yaw = yaw;
    const Tensor<T> obs = build_observation(state_, goal, r_uav_);
    const PolicyOutput<T> out = policy_forward(params_, depth, obs, hidden_);
    hidden_ = out.hidden;
    state_ = step(state_, out.u_body, dt, sim_);
    const UavState next = state_.value();
    if (!std::isfinite(next.p.x) || !std::isfinite(next.p.y) || !std::isfinite(next.p.z) ||
        !std::isfinite(next.v.norm())) {
      throw RolloutDiverged("rollout diverged: non-finite UAV state");
    }
    scene = step_obstacles(std::move(scene), dt, world_rng, next.p, next.v);

    StepOutcome<T> o;
    const Tensor<T> clear = clearance_distance(scene, state_.p, &o.clearance);
    const Vec3 v_obs = o.clearance.index >= 0
                           ? obstacle_velocity(scene.obstacles[static_cast<std::size_t>(o.clearance.index)])
                           : Vec3{};
    std::tie(o.terms.avoid, o.terms.collide) =
        safety_losses(clear, clearance_direction(scene, state_.p, o.clearance), state_.v, v_obs,
                      loss_);
    v_hist_.push_back(state_.v);
    if (v_hist_.size() > loss_.window) v_hist_.erase(v_hist_.begin());
    o.terms.trk = tracking_loss(v_hist_, target_velocity(state_.p, goal, loss_), loss_);
    std::tie(o.terms.acc, o.terms.jerk) = smoothness_losses(out.u_body, u_prev_, u_prev2_, loss_);
    o.terms.vpred = vpred_loss(out.v_hat, rotate_z(state_.v, -yaw));
    o.total = weighted_total(o.terms, loss_);
    o.loss = breakdown(o.terms, loss_);
    u_prev2_ = u_prev_;
    u_prev_ = out.u_body;
    o.u_body = {double(out.u_body[0]), double(out.u_body[1]), double(out.u_body[2])};
    o.v_hat = {double(out.v_hat[0]), double(out.v_hat[1]), double(out.v_hat[2])};
    o.collision = o.clearance.distance < r_uav_;
    o.depth = depth;
    return o;
  }

 private:
  const PolicyParams<T>& params_;
  SimConfig sim_;
  LossConfig loss_;
  double r_uav_;
  double d_max_;
  TensorState<T> state_;
  Tensor<T> hidden_;
  Tensor<T> u_prev_, u_prev2_;
  std::vector<Tensor<T>> v_hist_;
};

// ---------------------------------------------------------------------------
// Configuration

/// Training episodes: hover around `anchor` with approaching obstacles.
struct SceneSampler {
  int density = 2;
  double speed_min = 2.5;  // m/s, drawn per episode
  double speed_max = 5.0;
  double size = 0.5;                // obstacle radius, m
  Vec3 anchor{0, 0, 3};
  double start_offset = 2.0;        // horizontal start distance from the anchor, m
  double start_height_jitter = 0.0; // start height drawn in anchor.z +- this, m
  double goal_jitter = 0.5;         // goal offsets drawn inside this ball, m
  std::size_t goal_period = 150;    // steps between goal resamples

  void validate() const {
    if (density < 0) throw std::invalid_argument("scene: density must be >= 0");
    if (speed_min < 0 || speed_max < speed_min) throw std::invalid_argument("scene: bad speed range");
    if (!(size > 0)) throw std::invalid_argument("scene: size must be > 0");
    if (start_offset < 0 || goal_jitter < 0 || start_height_jitter < 0) {
      throw std::invalid_argument("scene: offsets must be >= 0");
    }
    if (goal_period < 1) throw std::invalid_argument("scene: goal_period must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneSampler, density, speed_min, speed_max, size,
                                                anchor, start_offset, start_height_jitter,
                                                goal_jitter, goal_period)

struct TrainConfig {
  std::size_t T = 600;
  std::size_t steps = 5000;
  std::size_t rollouts_per_step = 1;  // gradients averaged over this many episodes
  std::size_t tbptt_window = 64;
  YawMode yaw_mode = YawMode::fixed_random;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double grad_clip = 0;  // global-norm gradient clip; 0 disables
  double r_uav = 0.2;
  double d_max = kDefaultMaxDepth;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  bool desk_scale = false;
  SceneSampler scene;
  PolicySpec spec = panoramic_spec();
  SimConfig sim;
  LossConfig loss;

  void validate() const {
    if (T < 1) throw std::invalid_argument("train: T must be >= 1");
    if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
    if (rollouts_per_step < 1) throw std::invalid_argument("train: rollouts_per_step must be >= 1");
    if (tbptt_window < 1 || tbptt_window > T) {
      throw std::invalid_argument("train: need 1 <= tbptt_window <= T");
    }
    if (!(lr > 0) || !(r_uav > 0) || !(d_max > 0)) throw std::invalid_argument("train: lr, r_uav, d_max must be > 0");
    if (!(grad_clip >= 0)) throw std::invalid_argument("train: grad_clip must be >= 0");
    layer_shapes(spec);
    scene.validate();
    sim.validate();
    loss.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, T, steps, rollouts_per_step,
                                                tbptt_window, yaw_mode,
                                                seed, lr, grad_clip, r_uav, d_max, checkpoint_every,
                                                desk_scale, scene, spec, sim, loss)

/// Encoder widths of the desk-scale panoramic network.
inline const std::vector<std::size_t> kDeskChannels = {16, 32, 32, 32, 64, 64};

/// 16x32 panorama rendered 4x supersampled with a 10 m depth range,
/// 150-step rollouts, two obstacles, full-rollout BPTT.
inline TrainConfig desk_scale_preset(TrainConfig cfg) {
  cfg.desk_scale = true;
  cfg.T = 150;
  cfg.tbptt_window = cfg.T;
  cfg.steps = std::min<std::size_t>(cfg.steps, 2000);
  cfg.scene.density = 2;
  cfg.spec = panoramic_spec(16, 32, kDeskChannels);
  cfg.spec.supersample = 4;
  cfg.d_max = 10.0;
  return cfg;
}

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutStep {
  UavState state;
  Vec3 u_body;
  Vec3 v_hat;
  Vec3 goal;
  double dt = 0;
  double clearance = 0;
  bool collision = false;
  LossBreakdown loss;
};

struct RolloutLog {
  double episode_yaw = 0;
  std::vector<RolloutStep> steps;
  LossBreakdown mean;
};

template <class T>
struct RolloutResult {
  Tensor<T> loss;
  RolloutLog log;
};

namespace detail {

inline Vec3 random_in_ball(Rng& rng, double radius) {
  if (radius <= 0) return {};
  for (;;) {
    const Vec3 v{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    if (v.dot(v) <= 1.0) return v * radius;
  }
}

}  // namespace detail

/// One training episode. Ops are recorded on the calling thread's active
/// tape, if any; the carried state is detached every tbptt_window steps.
template <class T>
RolloutResult<T> rollout(const PolicyParams<T>& params, const TrainConfig& cfg, Rng& rng) {
  const SceneSampler& ss = cfg.scene;
  const double speed = uniform(rng, ss.speed_min, ss.speed_max);
  const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  UavState start;
  start.p = ss.anchor + Vec3{std::cos(az), std::sin(az), 0.0} * ss.start_offset;
  if (ss.start_height_jitter > 0) start.p.z += uniform(rng, -ss.start_height_jitter, ss.start_height_jitter);
  SpawnSite site;
  site.anchor = start.p;  // first throws aim at the UAV
  Scene scene = spawn_task_scene(TaskKind::hover, ss.density, speed, ss.size, rng, site);
  Vec3 goal = ss.anchor + detail::random_in_ball(rng, ss.goal_jitter);

  RolloutResult<T> res;
  double yaw;
  if (cfg.yaw_mode == YawMode::fixed_random) {
    yaw = sample_episode_yaw(YawMode::fixed_random, rng);
  } else {
    const Vec3 to_goal = goal - start.p;
    yaw = std::hypot(to_goal.x, to_goal.y) > 0 ? std::atan2(to_goal.y, to_goal.x) : 0.0;
  }
  start.yaw = yaw;
  res.log.episode_yaw = yaw;

  ClosedLoop<T> loop(params, cfg.sim, cfg.loss, cfg.r_uav, cfg.d_max, start);
  Tensor<T> total;
  std::vector<LossBreakdown> parts;
  for (std::size_t k = 0; k < cfg.T; ++k) {
    if (k > 0 && k % cfg.tbptt_window == 0) loop.detach_carry();
    if (k > 0 && k % ss.goal_period == 0) goal = ss.anchor + detail::random_in_ball(rng, ss.goal_jitter);
    if (cfg.yaw_mode == YawMode::free && k > 0) {
      yaw = sample_episode_yaw(YawMode::free, rng, loop.value().v, yaw);
    }
    const double dt = sample_dt(cfg.sim, rng);
    StepOutcome<T> o = loop.advance(scene, goal, yaw, dt, rng);
    total = total.defined() ? add(total, o.total) : o.total;
    parts.push_back(o.loss);
    res.log.steps.push_back({loop.value(), o.u_body, o.v_hat, goal, dt, o.clearance.distance,
                             o.collision, o.loss});
  }
  res.loss = scale(total, T(1) / static_cast<T>(cfg.T));
  if (!std::isfinite(static_cast<double>(res.loss.item()))) {
    throw RolloutDiverged("rollout diverged: non-finite loss");
  }
  res.log.mean = total_loss(parts, cfg.loss);
  return res;
}

// ---------------------------------------------------------------------------
// Optimisation loop

inline constexpr std::uint64_t kInitStream = 0x1417;
inline constexpr std::uint64_t kRolloutStream = 0x2a11;

struct TrainStepLog {
  std::size_t step = 0;
  LossBreakdown loss;
  double lr = 0;
  double grad_norm = 0;  // global norm of the averaged gradient, before clipping
  bool skipped = false;  // every rollout diverged; no update applied
};

struct TrainResult {
  PolicyParams<float> params;
  std::vector<TrainStepLog> history;
};

using TrainCallback = std::function<void(const TrainStepLog&, const PolicyParams<float>&)>;

/// Gradients of one rollout's loss with respect to every policy parameter.
template <class T>
std::vector<std::vector<T>> rollout_gradients(PolicyParams<T>& params, const TrainConfig& cfg,
                                              Rng& rng, RolloutLog* log = nullptr,
                                              T* loss_value = nullptr) {
  Tape<T> tape;
  GradScope<T> scope(tape);
  RolloutResult<T> r = rollout(params, cfg, rng);
  const Gradients<T> g = tape.backward(r.loss);
  std::vector<std::vector<T>> out;
  for (const auto& t : params.tensors) out.push_back(g.get(t));
  if (log) *log = std::move(r.log);
  if (loss_value) *loss_value = r.loss.item();
  return out;
}

inline PolicyParams<float> initial_policy(const TrainConfig& cfg) {
  Rng rng = make_rng(cfg.seed, {kInitStream});
  return init_policy<float>(cfg.spec, rng);
}

/// Full training run from a fresh initialisation (or `resume`).
inline TrainResult train(const TrainConfig& cfg, const TrainCallback& on_step = {},
                         std::optional<PolicyParams<float>> resume = std::nullopt) {
  cfg.validate();
  TrainResult res;
  res.params = resume ? std::move(*resume) : initial_policy(cfg);
  OptimizerState opt = make_optimizer_state(res.params.pointers(), cfg.lr);
  const long last = static_cast<long>(cfg.steps) - 1;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    TrainStepLog entry;
    entry.step = k;
    entry.lr = cosine_lr(static_cast<long>(k), last, cfg.lr);
    std::vector<std::vector<float>> grads;
    std::vector<LossBreakdown> parts;
    for (std::size_t j = 0; j < cfg.rollouts_per_step; ++j) {
      Rng rng = make_rng(cfg.seed, {kRolloutStream, k, j});
      try {
        RolloutLog log;
        auto g = rollout_gradients(res.params, cfg, rng, &log);
        if (grads.empty()) {
          grads = std::move(g);
        } else {
          for (std::size_t t = 0; t < g.size(); ++t) {
            for (std::size_t i = 0; i < g[t].size(); ++i) grads[t][i] += g[t][i];
          }
        }
        parts.push_back(log.mean);
      } catch (const RolloutDiverged&) {
      }
    }
    if (parts.empty()) {
      entry.skipped = true;
    } else {
      const double inv = 1.0 / static_cast<double>(parts.size());
      double sq = 0;
      for (const auto& g : grads) {
        for (float x : g) sq += static_cast<double>(x) * x;
      }
      entry.grad_norm = std::sqrt(sq) * inv;
      const double scale =
          cfg.grad_clip > 0 && entry.grad_norm > cfg.grad_clip ? inv * cfg.grad_clip / entry.grad_norm : inv;
      for (auto& g : grads) {
        for (auto& x : g) x *= static_cast<float>(scale);
      }
      adamw_step(res.params.pointers(), grads, opt, entry.lr);
      entry.loss = total_loss(parts, cfg.loss);
    }
    res.history.push_back(entry);
    if (on_step) on_step(entry, res.params);
  }
  return res;
}

}  // namespace panoavoid
