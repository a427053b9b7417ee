// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "panoavoid/training.hpp"

namespace panoavoid {

inline constexpr double kFollowOffset = 5.0;

struct TaskSpec {
  TaskKind kind = TaskKind::hover;
  double duration = 120.0;  // s
  double r_uav = 0.2;
  double d_max = kDefaultMaxDepth;
  int density = 3;
  double obstacle_speed = 2.5;
  double obstacle_size = 0.5;
  double noise_gamma = 0.0;
  // hover
  Vec3 anchor{0, 0, 3};
  double heading = 0.0;       // commanded yaw, rad
  double start_offset = 2.0;  // horizontal start distance from the anchor, m
  // follow
  double target_speed = 2.0;
  double follow_offset = kFollowOffset;
  std::vector<Vec3> target_path;  // closed loop; drawn per trial when empty
  // film
  std::vector<Vec3> waypoints{{0, 0, 3}, {20, 0, 3}, {20, 20, 3}};
  Vec3 subject{10, 10, 1};
  double path_speed = 1.0;

  SimConfig sim;
  LossConfig loss;

  void validate() const {
    if (!(duration > 0)) throw std::invalid_argument("task: duration must be > 0");
    if (!(r_uav > 0) || !(d_max > 0)) throw std::invalid_argument("task: r_uav and d_max must be > 0");
    if (density < 0 || obstacle_speed < 0 || !(obstacle_size > 0) || noise_gamma < 0) {
      throw std::invalid_argument("task: bad obstacle or noise parameters");
    }
    if (kind == TaskKind::film && waypoints.size() < 2) {
      throw std::invalid_argument("task: film needs at least 2 waypoints");
    }
    for (const auto& w : waypoints) {
      if (!std::isfinite(w.x) || !std::isfinite(w.y) || !std::isfinite(w.z)) {
        throw std::invalid_argument("task: waypoints must be finite");
      }
    }
    if (kind == TaskKind::follow && !(target_speed >= 0)) {
      throw std::invalid_argument("task: target_speed must be >= 0");
    }
    sim.validate();
    loss.validate();
  }
};

PANOAVOID_JSON_ENUM(TaskKind, {{TaskKind::hover, "hover"},
                                        {TaskKind::follow, "follow"},
                                        {TaskKind::film, "film"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TaskSpec, kind, duration, r_uav, d_max, density,
                                                obstacle_speed, obstacle_size, noise_gamma,
                                                anchor, heading, start_offset, target_speed,
                                                follow_offset, target_path, waypoints, subject,
                                                path_speed, sim, loss)

// ---------------------------------------------------------------------------
// Goals

namespace detail {

/// Point and unit tangent at arc length s along a polyline.
inline std::pair<Vec3, Vec3> along_polyline(const std::vector<Vec3>& pts, double s, bool loop) {
  const std::size_t n = pts.size();
  const std::size_t segs = loop ? n : n - 1;
  double total = 0;
  for (std::size_t i = 0; i < segs; ++i) total += (pts[(i + 1) % n] - pts[i]).norm();
  if (total <= 0) return {pts[0], {1, 0, 0}};
  s = loop ? std::fmod(std::max(s, 0.0), total) : std::clamp(s, 0.0, total);
  for (std::size_t i = 0; i < segs; ++i) {
    const Vec3 a = pts[i], b = pts[(i + 1) % n];
    const double len = (b - a).norm();
    if (len <= 0) continue;
    if (s <= len || i + 1 == segs) {
      const double f = std::min(s / len, 1.0);
      return {a + (b - a) * f, (b - a) / len};
    }
    s -= len;
  }
  return {pts.back(), {1, 0, 0}};
}

inline double heading_to(const Vec3& from, const Vec3& to, double fallback) {
  const Vec3 d = to - from;
  return std::hypot(d.x, d.y) > 1e-9 ? std::atan2(d.y, d.x) : fallback;
}

}  // namespace detail

/// Smooth random closed loop for the follow target.
inline std::vector<Vec3> random_target_path(Rng& rng, const Vec3& centre, int n_points = 8) {
  std::vector<Vec3> ctrl;
  for (int i = 0; i < n_points; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n_points;
    const double r = uniform(rng, 15.0, 25.0);
    ctrl.push_back(centre + Vec3{r * std::cos(a), r * std::sin(a), 0.0});
  }
  // Catmull-Rom resampling into a dense polyline
  std::vector<Vec3> out;
  const int sub = 8;
  for (int i = 0; i < n_points; ++i) {
    const Vec3 p0 = ctrl[(i + n_points - 1) % n_points], p1 = ctrl[i],
               p2 = ctrl[(i + 1) % n_points], p3 = ctrl[(i + 2) % n_points];
    for (int k = 0; k < sub; ++k) {
      const double t = static_cast<double>(k) / sub, t2 = t * t, t3 = t2 * t;
      out.push_back((p1 * 2.0 + (p2 - p0) * t + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2 +
                     (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3) *
                    0.5);
    }
  }
  return out;
}

struct GoalSample {
  Vec3 goal;
  double psi_c = 0.0;
  Vec3 target;  // followed target (follow) or subject (film); anchor for hover
};

inline GoalSample goal_stream(const TaskSpec& task, double t) {
  switch (task.kind) {
    case TaskKind::hover:
      return {task.anchor, task.heading, task.anchor};
    case TaskKind::follow: {
      if (task.target_path.size() < 2) throw std::invalid_argument("follow: target path missing");
      const auto [target, tangent] =
          detail::along_polyline(task.target_path, task.target_speed * t, true);
      const Vec3 goal = target + tangent * task.follow_offset;
      return {goal, detail::heading_to(goal, target, 0.0), target};
    }
    case TaskKind::film: {
      const auto [goal, tangent] = detail::along_polyline(task.waypoints, task.path_speed * t, false);
      return {goal, detail::heading_to(goal, task.subject, std::atan2(tangent.y, tangent.x)),
              task.subject};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Trials

struct TrialStep {
  double t = 0;  // time at the end of the step
  double dt = 0;
  Vec3 p, v, u;
  Vec3 goal;
  double yaw = 0;
  double clearance = 0;
  bool collision = false;
  double trk = 0;
};

struct CollisionInterval {
  double start = 0, end = 0;
};

struct TrialLog {
  std::uint64_t seed = 0;
  std::vector<TrialStep> steps;
  std::vector<CollisionInterval> intervals;
  double collision_time = 0;
  bool diverged = false;
  double mean_trk = 0;
  std::vector<Obstacle> final_obstacles;
};

inline constexpr std::uint64_t kWorldStream = 1, kTimingStream = 2, kNoiseStream = 3,
                               kLayoutStream = 4;

/// Closed-loop flight for task.duration seconds of simulated time. Yaw
/// follows the task's heading command.
template <class T = float>
TrialLog run_trial(const TaskSpec& task_in, const PolicyParams<T>& params, std::uint64_t seed) {
  task_in.validate();
  TaskSpec task = task_in;
  Rng layout = make_rng(seed, {kLayoutStream});
  Rng world = make_rng(seed, {kWorldStream});
  Rng timing = make_rng(seed, {kTimingStream});
  Rng noise = make_rng(seed, {kNoiseStream});
  if (task.kind == TaskKind::follow && task.target_path.size() < 2) {
    task.target_path = random_target_path(layout, {task.anchor.x, task.anchor.y, task.anchor.z});
  }
  const GoalSample g0 = goal_stream(task, 0.0);
  UavState start;
  start.yaw = g0.psi_c;
  if (task.kind == TaskKind::hover) {
    const double az = uniform(layout, 0.0, 2.0 * std::numbers::pi);
    start.p = task.anchor + Vec3{std::cos(az), std::sin(az), 0.0} * task.start_offset;
  } else {
    start.p = g0.goal;
  }
  SpawnSite site;
  site.anchor = task.kind == TaskKind::hover ? start.p : task.anchor;  // first throws aim at the UAV
  site.route = task.kind == TaskKind::follow ? task.target_path : task.waypoints;
  Scene scene = spawn_task_scene(task.kind, task.density, task.obstacle_speed, task.obstacle_size,
                                 layout, site);

  NoGradScope<T> no_grad;
  TrialLog log;
  log.seed = seed;
  ClosedLoop<T> loop(params, task.sim, task.loss, task.r_uav, task.d_max, start);
  double t = 0;
  double trk_sum = 0;
  while (task.duration - t > 1e-9) {
    const double dt = std::min(sample_dt(task.sim, timing), task.duration - t);
    const GoalSample g = goal_stream(task, t);
    TrialStep s;
    try {
      const StepOutcome<T> o =
          loop.advance(scene, g.goal, g.psi_c, dt, world, task.noise_gamma, &noise);
      const UavState st = loop.value();
      s = {t + dt, dt, st.p, st.v, o.u_body, g.goal, g.psi_c, o.clearance.distance, o.collision,
           o.loss.trk};
    } catch (const RolloutDiverged&) {
      log.diverged = true;
      log.intervals.push_back({t, task.duration});
      log.collision_time += task.duration - t;
      break;
    }
    t += dt;
    trk_sum += s.trk;
    if (s.collision) {
      log.collision_time += dt;
      if (!log.intervals.empty() && log.intervals.back().end == s.t - dt) {
        log.intervals.back().end = s.t;
      } else {
        log.intervals.push_back({s.t - dt, s.t});
      }
    }
    log.steps.push_back(s);
  }
  log.mean_trk = log.steps.empty() ? 0.0 : trk_sum / static_cast<double>(log.steps.size());
  log.final_obstacles = scene.obstacles;
  return log;
}

// ---------------------------------------------------------------------------
// Aggregation

struct TrialRecord {
  std::uint64_t seed = 0;
  double t_coll = 0;
  int collided = 0;  // c_i
  double mean_trk = 0;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t successes = 0;
  double sr = 0;
  double ct = 0;
  double mean_trk = 0;
  std::vector<TrialRecord> trials;
  nlohmann::json config = nlohmann::json::object();
};

/// SR = fraction of trials without collision; CT = mean of c_i T_i.
inline EvalReport aggregate(const std::vector<TrialLog>& trials) {
  EvalReport r;
  r.n = trials.size();
  if (trials.empty()) return r;
  double ct = 0, trk = 0;
  for (const auto& t : trials) {
    const int c = t.intervals.empty() ? 0 : 1;
    r.trials.push_back({t.seed, t.collision_time, c, t.mean_trk});
    r.successes += static_cast<std::size_t>(1 - c);
    ct += c * t.collision_time;
    trk += t.mean_trk;
  }
  const double n = static_cast<double>(r.n);
  r.sr = static_cast<double>(r.successes) / n;
  r.ct = ct / n;
  r.mean_trk = trk / n;
  return r;
}

/// Worker count: PANOAVOID_THREADS if set, else the hardware concurrency.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PANOAVOID_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs fn(i) for i in [0, n) on a bounded pool; results land by index.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, F fn) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = worker_count(n);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < k; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

/// Seeds seed, seed + 1, ..., seed + n - 1.
template <class T = float>
std::vector<TrialLog> run_trials(const TaskSpec& task, const PolicyParams<T>& params,
                                 std::size_t n, std::uint64_t seed) {
  return parallel_map<TrialLog>(n, [&](std::size_t i) { return run_trial(task, params, seed + i); });
}

template <class T = float>
EvalReport evaluate(const TaskSpec& task, const PolicyParams<T>& params, std::size_t n,
                    std::uint64_t seed, std::vector<TrialLog>* logs = nullptr) {
  auto trials = run_trials(task, params, n, seed);
  EvalReport r = aggregate(trials);
  r.config = task;
  if (logs) *logs = std::move(trials);
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

inline const std::vector<double> kDefaultNoiseLevels = {0.0, 0.05, 0.1, 0.2};
inline const std::vector<double> kDefaultObstacleRadii = {0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
inline constexpr double kSizeSweepSpeed = 5.0;

struct SweepEntry {
  double value = 0;  // gamma, radius or heading
  EvalReport report;
};

template <class T = float>
std::vector<SweepEntry> sweep_noise(const TaskSpec& task, const PolicyParams<T>& params,
                                    const std::vector<double>& gammas, std::size_t n,
                                    std::uint64_t seed) {
  std::vector<SweepEntry> out;
  for (double g : gammas) {
    TaskSpec t = task;
    t.noise_gamma = g;
    out.push_back({g, evaluate(t, params, n, seed)});
  }
  return out;
}

/// Hover task at the size-sweep obstacle speed, one report per radius.
template <class T = float>
std::vector<SweepEntry> sweep_size(const TaskSpec& task, const PolicyParams<T>& params,
                                   const std::vector<double>& radii, std::size_t n,
                                   std::uint64_t seed) {
  std::vector<SweepEntry> out;
  for (double r : radii) {
    TaskSpec t = task;
    t.kind = TaskKind::hover;
    t.obstacle_speed = kSizeSweepSpeed;
    t.obstacle_size = r;
    out.push_back({r, evaluate(t, params, n, seed)});
  }
  return out;
}

struct HeadingComparison {
  std::vector<double> headings;
  std::vector<EvalReport> fixed;  // per heading
  std::vector<EvalReport> free;
  double fixed_mean_sr = 0, free_mean_sr = 0;
  double fixed_sr_variance = 0, free_sr_variance = 0;
};

inline std::pair<double, double> mean_and_variance(const std::vector<EvalReport>& rs) {
  if (rs.empty()) return {0, 0};
  double m = 0;
  for (const auto& r : rs) m += r.sr;
  m /= static_cast<double>(rs.size());
  double v = 0;
  for (const auto& r : rs) v += (r.sr - m) * (r.sr - m);
  return {m, v / static_cast<double>(rs.size())};
}

/// Both policies fly the hover task at n_headings evenly spaced commanded
/// headings with the same trial seeds.
template <class T = float>
HeadingComparison heading_ablation(const TaskSpec& task, const PolicyParams<T>& fixed_policy,
                                   const PolicyParams<T>& free_policy, std::size_t n_headings,
                                   std::size_t n, std::uint64_t seed) {
  if (n_headings < 1) throw std::invalid_argument("heading_ablation: need at least one heading");
  HeadingComparison c;
  for (std::size_t k = 0; k < n_headings; ++k) {
    TaskSpec t = task;
    t.kind = TaskKind::hover;
    t.heading = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_headings);
    c.headings.push_back(t.heading);
    c.fixed.push_back(evaluate(t, fixed_policy, n, seed));
    c.free.push_back(evaluate(t, free_policy, n, seed));
  }
  std::tie(c.fixed_mean_sr, c.fixed_sr_variance) = mean_and_variance(c.fixed);
  std::tie(c.free_mean_sr, c.free_sr_variance) = mean_and_variance(c.free);
  return c;
}

// ---------------------------------------------------------------------------
// Output formats

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["config"] = r.config;
  j["n"] = r.n;
  j["successes"] = r.successes;
  j["SR"] = r.sr;
  j["CT"] = r.ct;
  j["mean_trk"] = r.mean_trk;
  j["trials"] = nlohmann::json::array();
  for (const auto& t : r.trials) {
    j["trials"].push_back(
        {{"seed", t.seed}, {"T_coll", t.t_coll}, {"c", t.collided}, {"mean_trk", t.mean_trk}});
  }
  return j;
}

inline std::string format_sr(const EvalReport& r) {
  return std::to_string(r.successes) + "/" + std::to_string(r.n);
}

/// Aligned text grid: one row per entry with SR as k/N and CT in seconds.
inline std::string summary_table(const std::string& key,
                                 const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << key << std::right << std::setw(8) << "SR" << std::setw(10)
     << "CT (s)" << '\n';
  for (const auto& [label, r] : rows) {
    os << std::left << std::setw(14) << label << std::right << std::setw(8) << format_sr(r)
       << std::setw(10) << std::fixed << std::setprecision(2) << r.ct << '\n';
  }
  return os.str();
}

inline std::string trial_csv(const TrialLog& log) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "t,px,py,pz,vx,vy,vz,ux,uy,uz,clearance,collision\n";
  for (const auto& s : log.steps) {
    os << s.t << ',' << s.p.x << ',' << s.p.y << ',' << s.p.z << ',' << s.v.x << ',' << s.v.y
       << ',' << s.v.z << ',' << s.u.x << ',' << s.u.y << ',' << s.u.z << ',' << s.clearance << ','
       << (s.collision ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace panoavoid
