// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "panoavoid/geometry.hpp"
#include "panoavoid/ops.hpp"
#include "panoavoid/random.hpp"
#include "panoavoid/tensor.hpp"

namespace panoavoid {

struct SphereShape {
  double radius = 0.5;
};

/// Vertical capsule: a z-aligned segment of length 2 * half_height swept by radius.
struct CapsuleShape {
  double radius = 0.5;
  double half_height = 1.0;
};

using ObstacleShape = std::variant<SphereShape, CapsuleShape>;

struct StaticMotion {};

/// Constant velocity; respawns on the boundary of a ball around the focus
/// point once it leaves that ball.
struct LinearMotion {
  Vec3 velocity;
  double respawn_radius = 20.0;
};

/// Homes on the constant-velocity intercept of the focus point until impact
/// is `lock_time` seconds away, then flies straight through the last aim
/// point `target`. After overshooting it by
/// `overshoot` it relaunches from a random direction at a range drawn from
/// [range_min, range_max] around the current focus point. lock_time = inf
/// locks on the first step, a straight throw.
struct ApproachMotion {
  Vec3 target;
  double speed = 2.5;
  Vec3 direction{1, 0, 0};
  double range_min = 8.0;
  double range_max = 15.0;
  double elevation_min = -0.1;
  double elevation_max = 0.35;
  double overshoot = 2.0;
  double lock_time = 1.5;  // s
  bool locked = false;
};

/// Closed polyline traversed at constant speed.
struct WaypointLoopMotion {
  std::vector<Vec3> points;
  double speed = 1.0;
  std::size_t segment = 0;
  double progress = 0.0;  // metres along the current segment
};

using MotionModel = std::variant<StaticMotion, LinearMotion, ApproachMotion, WaypointLoopMotion>;

struct Obstacle {
  ObstacleShape shape;
  Vec3 position;
  MotionModel motion = StaticMotion{};
};

struct Bounds {
  Vec3 min{-50, -50, -10};
  Vec3 max{50, 50, 30};
  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
};

struct Scene {
  std::vector<Obstacle> obstacles;
  std::optional<double> ground_height = 0.0;
  Bounds bounds;
};

inline constexpr int kGroundIndex = -1;
inline constexpr int kNothingIndex = -2;
// Reported clearance when the scene has neither obstacles nor ground.
inline constexpr double kFarClearance = 1e6;

struct ClearanceResult {
  double distance = kFarClearance;
  Vec3 direction;  // unit, the direction in which clearance shrinks fastest
  int index = kNothingIndex;
};

inline double shape_radius(const ObstacleShape& s) {
  return std::visit([](const auto& v) { return v.radius; }, s);
}

namespace detail {

inline void validate_obstacle(const Obstacle& o) {
  const double r = shape_radius(o.shape);
  if (!(r > 0)) throw std::invalid_argument("obstacle: radius must be > 0");
  if (const auto* c = std::get_if<CapsuleShape>(&o.shape); c && !(c->half_height >= 0)) {
    throw std::invalid_argument("obstacle: half_height must be >= 0");
  }
}

// Surface distance and unit vector towards the closest surface point.
inline std::pair<double, Vec3> obstacle_distance(const Obstacle& o, const Vec3& p) {
  Vec3 core = o.position;
  double radius = 0;
  if (const auto* s = std::get_if<SphereShape>(&o.shape)) {
    radius = s->radius;
  } else {
    const auto& c = std::get<CapsuleShape>(o.shape);
    radius = c.radius;
    core.z = std::clamp(p.z, o.position.z - c.half_height, o.position.z + c.half_height);
  }
  const Vec3 to_core = core - p;
  const double n = to_core.norm();
  const Vec3 dir = n > 0 ? to_core / n : Vec3{0, 0, -1};
  return {n - radius, dir};
}

}  // namespace detail

/// Closest surface over obstacles and ground; ties keep the lowest index and
/// the ground ranks after every obstacle.
inline ClearanceResult clearance(const Scene& scene, const Vec3& p) {
  ClearanceResult best;
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
    const auto [d, dir] = detail::obstacle_distance(scene.obstacles[i], p);
    if (best.index == kNothingIndex || d < best.distance) {
      best = {d, dir, static_cast<int>(i)};
    }
  }
  if (scene.ground_height) {
    const double d = p.z - *scene.ground_height;
    if (best.index == kNothingIndex || d < best.distance) best = {d, {0, 0, -1}, kGroundIndex};
  }
  return best;
}

/// Clearance as a differentiable function of position p (shape [3]).
template <class T>
Tensor<T> clearance_distance(const Scene& scene, const Tensor<T>& p, ClearanceResult* info = nullptr) {
  if (p.size() != 3) throw ShapeError("clearance: position must have 3 components");
  const ClearanceResult r = clearance(scene, {double(p[0]), double(p[1]), double(p[2])});
  if (info) *info = r;
  const Vec3 g = -r.direction;
  return detail::make_result<T>(Shape{1}, {static_cast<T>(r.distance)}, {&p},
                                [g](const T* go, const GradRefs<T>& gr) {
                                  T* gp = gr[0];
                                  gp[0] += go[0] * static_cast<T>(g.x);
                                  gp[1] += go[0] * static_cast<T>(g.y);
                                  gp[2] += go[0] * static_cast<T>(g.z);
                                });
}

/// Unit vector from p towards the closest surface point `r` reports, as a
/// differentiable function of p. Constant for the ground.
template <class T>
Tensor<T> clearance_direction(const Scene& scene, const Tensor<T>& p, const ClearanceResult& r) {
  if (p.size() != 3) throw ShapeError("clearance: position must have 3 components");
  const auto constant = [](const Vec3& v) { return Tensor<T>::vec3(T(v.x), T(v.y), T(v.z)); };
  if (r.index < 0 || r.distance == kFarClearance) return constant(r.direction);
  const Obstacle& o = scene.obstacles[static_cast<std::size_t>(r.index)];
  const double radius = shape_radius(o.shape);
  Vec3 core = o.position;
  bool on_axis = false;  // closest core point shares the UAV's height
  if (const auto* c = std::get_if<CapsuleShape>(&o.shape)) {
    const double z = double(p[2]);
    core.z = std::clamp(z, o.position.z - c->half_height, o.position.z + c->half_height);
    on_axis = z > o.position.z - c->half_height && z < o.position.z + c->half_height;
  }
  Tensor<T> diff;
  if (on_axis) {
    const Tensor<T> xy(Shape{2}, std::vector<T>{T(core.x), T(core.y)});
    diff = concat<T>({sub(xy, slice(p, 0, 2)), Tensor<T>(Shape{1}, T(0))});
  } else {
    diff = sub(constant(core), p);
  }
  if (r.distance + radius <= 0) return constant(r.direction);
  const Tensor<T> dist = clearance_distance(scene, p);
  return mul_scalar(diff, reciprocal(add_scalar(dist, T(radius))));
}

/// Strictly inside the UAV's safety radius.
inline bool in_collision(const Scene& scene, const Vec3& p, double r_uav) {
  return clearance(scene, p).distance < r_uav;
}

inline Vec3 obstacle_velocity(const Obstacle& o) {
  return std::visit(
      [](const auto& m) -> Vec3 {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LinearMotion>) {
          return m.velocity;
        } else if constexpr (std::is_same_v<M, ApproachMotion>) {
          return m.direction * m.speed;
        } else if constexpr (std::is_same_v<M, WaypointLoopMotion>) {
          if (m.points.size() < 2) return {};
          const Vec3 a = m.points[m.segment], b = m.points[(m.segment + 1) % m.points.size()];
          const Vec3 d = b - a;
          const double n = d.norm();
          return n > 0 ? d * (m.speed / n) : Vec3{};
        } else {
          return {};
        }
      },
      o.motion);
}

namespace detail {

inline Vec3 random_direction(Rng& rng, double elevation_min, double elevation_max) {
  const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double el = uniform(rng, elevation_min, elevation_max);
  return direction_from_angles(el, az);
}

/// Time for a mover at `from` with `speed` to meet a point at `p` moving
/// with `v`; negative if it cannot catch it.
inline double intercept_time(const Vec3& from, double speed, const Vec3& p, const Vec3& v) {
  const Vec3 r = p - from;
  const double a = v.dot(v) - speed * speed;
  const double b = 2.0 * r.dot(v);
  const double c = r.dot(r);
  if (std::abs(a) < 1e-12) return b < 0 ? -c / b : -1.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return -1.0;
  const double sq = std::sqrt(disc);
  const double t1 = (-b - sq) / (2.0 * a), t2 = (-b + sq) / (2.0 * a);
  const double lo = std::min(t1, t2), hi = std::max(t1, t2);
  if (lo >= 0) return lo;
  return hi >= 0 ? hi : -1.0;
}

inline void launch_approach(Obstacle& o, ApproachMotion& m, const Vec3& target, Rng& rng) {
  const Vec3 from = random_direction(rng, m.elevation_min, m.elevation_max);
  const double range = uniform(rng, m.range_min, m.range_max);
  m.target = target;
  m.direction = -from;
  m.locked = false;
  o.position = target + from * range;
}

}  // namespace detail

/// Advances every obstacle by dt. `focus` is the point approach movers re-aim
/// at and linear movers respawn around (normally the UAV position), moving
/// with `focus_velocity`.
inline Scene step_obstacles(Scene scene, double dt, Rng& rng, const Vec3& focus,
                            const Vec3& focus_velocity = {}) {
  if (!(dt > 0)) throw std::invalid_argument("step_obstacles: dt must be > 0");
  for (auto& o : scene.obstacles) {
    std::visit(
        [&](auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, LinearMotion>) {
            o.position += m.velocity * dt;
            if ((o.position - focus).norm() > m.respawn_radius) {
              const double speed = m.velocity.norm();
              const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
              const Vec3 out{std::cos(az), std::sin(az), 0.0};
              o.position = focus + out * (0.999 * m.respawn_radius);
              o.position.z = focus.z + uniform(rng, -1.0, 1.0);
              const double skew = az + std::numbers::pi + uniform(rng, -0.3, 0.3);
              m.velocity = Vec3{std::cos(skew), std::sin(skew), 0.0} * speed;
            }
          } else if constexpr (std::is_same_v<M, ApproachMotion>) {
            if (!m.locked) {
              double t = detail::intercept_time(o.position, m.speed, focus, focus_velocity);
              if (t < 0) t = (focus - o.position).norm() / m.speed;
              const Vec3 aim = focus + focus_velocity * t;
              const Vec3 to = aim - o.position;
              const double dist = to.norm();
              if (dist > 0) m.direction = to / dist;
              m.target = aim;
              m.locked = t <= m.lock_time;
            }
            o.position += m.direction * (m.speed * dt);
            if ((o.position - m.target).dot(m.direction) > m.overshoot) {
              detail::launch_approach(o, m, focus, rng);
            }
          } else if constexpr (std::is_same_v<M, WaypointLoopMotion>) {
            if (m.points.size() < 2 || m.speed <= 0) return;
            double remaining = m.speed * dt;
            for (int guard = 0; guard < 10000 && remaining > 0; ++guard) {
              const Vec3 a = m.points[m.segment], b = m.points[(m.segment + 1) % m.points.size()];
              const double len = (b - a).norm();
              if (m.progress + remaining < len) {
                m.progress += remaining;
                remaining = 0;
              } else {
                remaining -= len - m.progress;
                m.progress = 0;
                m.segment = (m.segment + 1) % m.points.size();
              }
            }
            const Vec3 a = m.points[m.segment], b = m.points[(m.segment + 1) % m.points.size()];
            const double len = (b - a).norm();
            o.position = len > 0 ? a + (b - a) * (m.progress / len) : a;
          }
        },
        o.motion);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Task scenes

enum class TaskKind { hover, follow, film };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::hover: return "hover";
    case TaskKind::follow: return "follow";
    case TaskKind::film: return "film";
  }
  return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "hover") return TaskKind::hover;
  if (s == "follow") return TaskKind::follow;
  if (s == "film") return TaskKind::film;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

struct SpawnSite {
  Vec3 anchor{0, 0, 3};  // hover: the point the first throws aim at
  std::vector<Vec3> route;  // used by follow / film
  double ground_height = 0.0;
};

/// Random obstacle layout for a task.
///  hover:  `density` spheres of radius `size` homing on the focus point at
///          `speed`, first launched 8-15 m out from the anchor.
///  follow / film: `density` static capsules scattered along the route plus
///          `density` linear movers crossing it.
inline Scene spawn_task_scene(TaskKind kind, int density, double speed, double size, Rng& rng,
                              const SpawnSite& site = {}) {
  if (density < 0) throw std::invalid_argument("spawn_task_scene: density must be >= 0");
  if (!(size > 0)) throw std::invalid_argument("spawn_task_scene: size must be > 0");
  if (speed < 0) throw std::invalid_argument("spawn_task_scene: speed must be >= 0");
  Scene scene;
  scene.ground_height = site.ground_height;
  if (kind == TaskKind::hover) {
    for (int i = 0; i < density; ++i) {
      Obstacle o{SphereShape{size}, {}, StaticMotion{}};
      ApproachMotion m;
      m.speed = speed;
      detail::launch_approach(o, m, site.anchor, rng);
      o.motion = m;
      scene.obstacles.push_back(o);
    }
    return scene;
  }
  if (site.route.size() < 2) throw std::invalid_argument("spawn_task_scene: route needs 2+ points");
  auto route_point = [&](double u) {
    const double f = u * static_cast<double>(site.route.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(f), site.route.size() - 2);
    const double t = f - static_cast<double>(i);
    return site.route[i] + (site.route[i + 1] - site.route[i]) * t;
  };
  for (int i = 0; i < density; ++i) {
    const Vec3 base = route_point(uniform(rng, 0.1, 1.0));
    const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double lateral = uniform(rng, 0.0, 3.0);
    const double half_height = uniform(rng, 1.5, 3.0);
    Vec3 pos = base + Vec3{std::cos(az), std::sin(az), 0.0} * lateral;
    pos.z = site.ground_height + half_height;
    scene.obstacles.push_back({CapsuleShape{size, half_height}, pos, StaticMotion{}});
  }
  for (int i = 0; i < density; ++i) {
    const Vec3 base = route_point(uniform(rng, 0.0, 1.0));
    const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double range = uniform(rng, 6.0, 12.0);
    const Vec3 out{std::cos(az), std::sin(az), 0.0};
    Vec3 pos = base + out * range;
    pos.z = base.z + uniform(rng, -0.5, 0.5);
    scene.obstacles.push_back({SphereShape{size}, pos, LinearMotion{-out * speed, 25.0}});
  }
  return scene;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const Vec3& v) { j = nlohmann::json::array({v.x, v.y, v.z}); }

inline void from_json(const nlohmann::json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["ground_height"] = scene.ground_height ? nlohmann::json(*scene.ground_height) : nlohmann::json();
  j["bounds"] = {{"min", scene.bounds.min}, {"max", scene.bounds.max}};
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : scene.obstacles) {
    nlohmann::json jo;
    if (const auto* s = std::get_if<SphereShape>(&o.shape)) {
      jo["shape"] = "sphere";
      jo["params"] = {{"radius", s->radius}};
    } else {
      const auto& c = std::get<CapsuleShape>(o.shape);
      jo["shape"] = "capsule";
      jo["params"] = {{"radius", c.radius}, {"half_height", c.half_height}};
    }
    jo["position"] = o.position;
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, StaticMotion>) {
            jo["motion"] = {{"kind", "static"}};
          } else if constexpr (std::is_same_v<M, LinearMotion>) {
            jo["motion"] = {{"kind", "linear"}, {"velocity", m.velocity},
                            {"respawn_radius", m.respawn_radius}};
          } else if constexpr (std::is_same_v<M, ApproachMotion>) {
            jo["motion"] = {{"kind", "approach"}, {"target", m.target}, {"speed", m.speed},
                            {"lock_time", m.lock_time}, {"locked", m.locked}};
          } else {
            jo["motion"] = {{"kind", "waypoint_loop"}, {"points", m.points}, {"speed", m.speed}};
          }
        },
        o.motion);
    j["obstacles"].push_back(jo);
  }
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"ground_height", "bounds", "obstacles"}, "scene");
  Scene scene;
  if (j.contains("ground_height")) {
    scene.ground_height = j["ground_height"].is_null()
                              ? std::nullopt
                              : std::optional<double>(j["ground_height"].get<double>());
  }
  if (j.contains("bounds")) {
    detail::reject_unknown_keys(j["bounds"], {"min", "max"}, "scene.bounds");
    scene.bounds.min = j["bounds"].at("min").get<Vec3>();
    scene.bounds.max = j["bounds"].at("max").get<Vec3>();
  }
  for (const auto& jo : j.value("obstacles", nlohmann::json::array())) {
    detail::reject_unknown_keys(jo, {"shape", "params", "position", "motion"}, "obstacle");
    Obstacle o;
    const auto shape = jo.at("shape").get<std::string>();
    const auto& params = jo.at("params");
    if (shape == "sphere") {
      detail::reject_unknown_keys(params, {"radius"}, "sphere params");
      o.shape = SphereShape{params.at("radius").get<double>()};
    } else if (shape == "capsule") {
      detail::reject_unknown_keys(params, {"radius", "half_height"}, "capsule params");
      o.shape = CapsuleShape{params.at("radius").get<double>(),
                             params.at("half_height").get<double>()};
    } else {
      throw std::invalid_argument("obstacle: unknown shape '" + shape + "'");
    }
    o.position = jo.at("position").get<Vec3>();
    const auto& jm = jo.value("motion", nlohmann::json{{"kind", "static"}});
    const auto kind = jm.at("kind").get<std::string>();
    if (kind == "static") {
      detail::reject_unknown_keys(jm, {"kind"}, "motion");
      o.motion = StaticMotion{};
    } else if (kind == "linear") {
      detail::reject_unknown_keys(jm, {"kind", "velocity", "respawn_radius"}, "motion");
      o.motion = LinearMotion{jm.at("velocity").get<Vec3>(), jm.value("respawn_radius", 20.0)};
    } else if (kind == "approach") {
      detail::reject_unknown_keys(jm, {"kind", "target", "speed", "lock_time", "locked"}, "motion");
      ApproachMotion m;
      m.target = jm.at("target").get<Vec3>();
      m.speed = jm.at("speed").get<double>();
      m.lock_time = jm.value("lock_time", m.lock_time);
      m.locked = jm.value("locked", m.locked);
      if (m.speed < 0) throw std::invalid_argument("motion: speed must be >= 0");
      if (!(m.lock_time >= 0)) throw std::invalid_argument("motion: lock_time must be >= 0");
      const Vec3 d = m.target - o.position;
      m.direction = d.norm() > 0 ? d.normalized() : Vec3{1, 0, 0};
      o.motion = m;
    } else if (kind == "waypoint_loop") {
      detail::reject_unknown_keys(jm, {"kind", "points", "speed"}, "motion");
      WaypointLoopMotion m;
      m.points = jm.at("points").get<std::vector<Vec3>>();
      m.speed = jm.at("speed").get<double>();
      if (m.speed < 0) throw std::invalid_argument("motion: speed must be >= 0");
      o.motion = m;
    } else {
      throw std::invalid_argument("motion: unknown kind '" + kind + "'");
    }
    detail::validate_obstacle(o);
    scene.obstacles.push_back(std::move(o));
  }
  return scene;
}

}  // namespace panoavoid
