// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "panoavoid/world.hpp"
#include "test_util.hpp"

namespace panoavoid {
namespace {

Scene no_ground() {
  Scene s;
  s.ground_height.reset();
  return s;
}

TEST(Clearance, SphereAnalytic) {
  Scene s = no_ground();
  s.obstacles.push_back({SphereShape{1.0}, {0, 0, 0}, StaticMotion{}});
  const ClearanceResult r = clearance(s, {3, 0, 0});
  EXPECT_DOUBLE_EQ(r.distance, 2.0);
  EXPECT_EQ(r.direction, (Vec3{-1, 0, 0}));
  EXPECT_EQ(r.index, 0);
}

TEST(Clearance, GroundOnly) {
  Scene s;
  const ClearanceResult r = clearance(s, {5, 5, 1.5});
  EXPECT_DOUBLE_EQ(r.distance, 1.5);
  EXPECT_EQ(r.direction, (Vec3{0, 0, -1}));
  EXPECT_EQ(r.index, kGroundIndex);
}

TEST(Clearance, CapsuleUsesClosestAxisPoint) {
  Scene s = no_ground();
  s.obstacles.push_back({CapsuleShape{0.5, 2.0}, {0, 0, 3}, StaticMotion{}});
  EXPECT_DOUBLE_EQ(clearance(s, {2, 0, 4}).distance, 1.5);   // beside the cylinder
  EXPECT_DOUBLE_EQ(clearance(s, {0, 0, 7.5}).distance, 2.0);  // above the top cap
}

TEST(Clearance, MatchesBruteForceMinimum) {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Scene s;
    for (int i = 0; i < 20; ++i) {
      s.obstacles.push_back({SphereShape{uniform(rng, 0.1, 1.0)},
                             {uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, 0, 6)},
                             StaticMotion{}});
    }
    const Vec3 p{uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, 0.5, 6)};
    double best = p.z;  // ground at 0
    for (const auto& o : s.obstacles) {
      best = std::min(best, (o.position - p).norm() - std::get<SphereShape>(o.shape).radius);
    }
    EXPECT_EQ(clearance(s, p).distance, best);
  }
}

TEST(Clearance, TiesKeepLowestIndex) {
  Scene s = no_ground();
  s.obstacles.push_back({SphereShape{1.0}, {2, 0, 0}, StaticMotion{}});
  s.obstacles.push_back({SphereShape{1.0}, {-2, 0, 0}, StaticMotion{}});
  EXPECT_EQ(clearance(s, {0, 0, 0}).index, 0);
}

TEST(Clearance, EmptySceneIsFar) {
  const ClearanceResult r = clearance(no_ground(), {0, 0, 0});
  EXPECT_EQ(r.index, kNothingIndex);
  EXPECT_EQ(r.distance, kFarClearance);
}

TEST(Clearance, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(2);
  Scene s;
  for (int i = 0; i < 5; ++i) {
    s.obstacles.push_back({SphereShape{0.5}, {uniform(rng, -4, 4), uniform(rng, -4, 4), 2},
                           StaticMotion{}});
  }
  s.obstacles.push_back({CapsuleShape{0.3, 1.0}, {1, 1, 1}, StaticMotion{}});
  for (int k = 0; k < 10; ++k) {
    Tensor<double> p = testing::random_leaf({3}, rng, -3, 3);
    p.mutable_data()[2] = uniform(rng, 1.0, 3.0);
    EXPECT_LT(testing::gradient_check([&] { return clearance_distance(s, p); }, {&p}), 1e-4);
  }
}

TEST(InCollision, StrictInequality) {
  Scene s = no_ground();
  s.obstacles.push_back({SphereShape{1.0}, {0, 0, 0}, StaticMotion{}});
  EXPECT_FALSE(in_collision(s, {3, 0, 0}, 0.2));
  EXPECT_TRUE(in_collision(s, {0.5, 0, 0}, 0.2));
  EXPECT_FALSE(in_collision(s, {1.25, 0, 0}, 0.25));
  EXPECT_TRUE(in_collision(s, {1.2499, 0, 0}, 0.25));
}

TEST(StepObstacles, StaticSceneUnchanged) {
  Scene s;
  s.obstacles.push_back({SphereShape{1.0}, {1, 2, 3}, StaticMotion{}});
  Rng rng = make_rng(3);
  const Scene n = step_obstacles(s, 0.1, rng, {0, 0, 0});
  EXPECT_EQ(n.obstacles[0].position, (Vec3{1, 2, 3}));
}

TEST(StepObstacles, LinearShift) {
  Scene s;
  s.obstacles.push_back({SphereShape{1.0}, {0, 0, 1}, LinearMotion{{1, 0, 0}, 20}});
  Rng rng = make_rng(4);
  const Scene n = step_obstacles(s, 0.5, rng, {0, 0, 1});
  EXPECT_EQ(n.obstacles[0].position, (Vec3{0.5, 0, 1}));
}

TEST(StepObstacles, LinearRespawnsOnBoundaryHeadingInwards) {
  Scene s;
  s.obstacles.push_back({SphereShape{0.5}, {9.9, 0, 2}, LinearMotion{{2, 0, 0}, 10}});
  Rng rng = make_rng(5);
  const Vec3 focus{0, 0, 2};
  const Scene n = step_obstacles(s, 0.5, rng, focus);
  const Obstacle& o = n.obstacles[0];
  const Vec3 off = o.position - focus;
  EXPECT_LE(std::hypot(off.x, off.y), 10.0);
  EXPECT_LT(std::get<LinearMotion>(o.motion).velocity.dot(off), 0.0);
  EXPECT_NEAR(std::get<LinearMotion>(o.motion).velocity.norm(), 2.0, 1e-12);
}

TEST(StepObstacles, ApproachClosesDistanceBySpeedTimesDt) {
  Scene s;
  ApproachMotion m;
  m.speed = 3.0;
  s.obstacles.push_back({SphereShape{0.5}, {10, 0, 3}, m});
  Rng rng = make_rng(6);
  const Vec3 focus{0, 0, 3};
  const Scene n = step_obstacles(s, 0.2, rng, focus);
  EXPECT_NEAR((s.obstacles[0].position - focus).norm() - (n.obstacles[0].position - focus).norm(),
              0.6, 1e-12);
}

TEST(StepObstacles, ApproachHomesThenLocks) {
  Scene s;
  ApproachMotion m;
  m.speed = 2.0;
  m.lock_time = 1.0;
  s.obstacles.push_back({SphereShape{0.5}, {10, 0, 3}, m});
  Rng rng = make_rng(7);
  // Homing: the heading follows a moving focus.
  s = step_obstacles(s, 0.1, rng, {0, 5, 3});
  const auto& a = std::get<ApproachMotion>(s.obstacles[0].motion);
  EXPECT_FALSE(a.locked);
  EXPECT_GT(a.direction.y, 0.0);
  // Inside lock range the course is frozen even if the focus moves.
  s.obstacles[0].position = {1.5, 0, 3};
  s = step_obstacles(s, 0.1, rng, {0, 0, 3});
  const Vec3 locked_dir = std::get<ApproachMotion>(s.obstacles[0].motion).direction;
  EXPECT_TRUE(std::get<ApproachMotion>(s.obstacles[0].motion).locked);
  s = step_obstacles(s, 0.1, rng, {0, 3, 3});
  EXPECT_EQ(std::get<ApproachMotion>(s.obstacles[0].motion).direction, locked_dir);
}

TEST(StepObstacles, InterceptTimeAnalytic) {
  // |(4t, 3)| = 5t  ->  t = 1.
  EXPECT_NEAR(detail::intercept_time({0, 0, 0}, 5.0, {0, 3, 0}, {4, 0, 0}), 1.0, 1e-12);
  // Stationary point: distance / speed.
  EXPECT_NEAR(detail::intercept_time({0, 0, 0}, 2.0, {6, 0, 0}, {0, 0, 0}), 3.0, 1e-12);
  // Target running away faster than the mover.
  EXPECT_LT(detail::intercept_time({0, 0, 0}, 1.0, {5, 0, 0}, {2, 0, 0}), 0.0);
}

TEST(StepObstacles, ApproachLeadsConstantVelocityFocus) {
  Scene s;
  ApproachMotion m;
  m.speed = 4.0;
  m.overshoot = 100.0;
  s.obstacles.push_back({SphereShape{0.5}, {12, 0, 3}, m});
  Rng rng = make_rng(11);
  Vec3 focus{0, 0, 3};
  const Vec3 vel{0, 0, 0.8};
  const double dt = 0.01;
  double closest = 1e9;
  for (int i = 0; i < 600; ++i) {
    focus += vel * dt;
    s = step_obstacles(s, dt, rng, focus, vel);
    closest = std::min(closest, (s.obstacles[0].position - focus).norm());
  }
  EXPECT_LT(closest, 0.05);
  // Without the velocity hint a steady climb escapes the locked throw.
  Scene s2;
  s2.obstacles.push_back({SphereShape{0.5}, {12, 0, 3}, m});
  focus = {0, 0, 3};
  closest = 1e9;
  for (int i = 0; i < 600; ++i) {
    focus += vel * dt;
    s2 = step_obstacles(s2, dt, rng, focus);
    closest = std::min(closest, (s2.obstacles[0].position - focus).norm());
  }
  EXPECT_GT(closest, 0.7);
}

TEST(StepObstacles, ApproachRelaunchesAfterOvershoot) {
  Scene s;
  ApproachMotion m;
  m.speed = 5.0;
  m.lock_time = std::numeric_limits<double>::infinity();
  s.obstacles.push_back({SphereShape{0.5}, {0.1, 0, 3}, m});
  Rng rng = make_rng(8);
  const Vec3 focus{0, 0, 3};
  double prev = (s.obstacles[0].position - focus).norm();
  bool relaunched = false;
  for (int i = 0; i < 20 && !relaunched; ++i) {
    s = step_obstacles(s, 0.1, rng, focus);
    const double r = (s.obstacles[0].position - focus).norm();
    if (r > prev + 1.0) {
      relaunched = true;
      EXPECT_GE(r, 8.0);
      EXPECT_LE(r, 15.0);
    }
    prev = r;
  }
  EXPECT_TRUE(relaunched);
  EXPECT_EQ(s.obstacles.size(), 1u);
}

TEST(StepObstacles, PreservesCountAndRejectsBadDt) {
  Rng rng = make_rng(9);
  Scene s = spawn_task_scene(TaskKind::hover, 4, 2.5, 0.5, rng);
  for (int i = 0; i < 100; ++i) s = step_obstacles(s, 1.0 / 15, rng, {0, 0, 3});
  EXPECT_EQ(s.obstacles.size(), 4u);
  EXPECT_THROW(step_obstacles(s, 0.0, rng, {0, 0, 3}), std::invalid_argument);
}

TEST(SpawnTaskScene, DensityZeroIsGroundOnly) {
  Rng rng = make_rng(10);
  const Scene s = spawn_task_scene(TaskKind::hover, 0, 2.5, 0.5, rng);
  EXPECT_TRUE(s.obstacles.empty());
  EXPECT_TRUE(s.ground_height.has_value());
}

TEST(SpawnTaskScene, HoverCountRangeAndSize) {
  Rng rng = make_rng(11);
  SpawnSite site;
  site.anchor = {1, 2, 3};
  const Scene s = spawn_task_scene(TaskKind::hover, 3, 2.5, 0.4, rng, site);
  ASSERT_EQ(s.obstacles.size(), 3u);
  for (const auto& o : s.obstacles) {
    const double r = (o.position - site.anchor).norm();
    EXPECT_GE(r, 8.0);
    EXPECT_LE(r, 15.0);
    EXPECT_EQ(shape_radius(o.shape), 0.4);
    EXPECT_EQ(std::get<ApproachMotion>(o.motion).speed, 2.5);
  }
}

TEST(SpawnTaskScene, RouteScenesMixStaticAndMovers) {
  Rng rng = make_rng(12);
  SpawnSite site;
  site.route = {{0, 0, 3}, {20, 0, 3}};
  const Scene s = spawn_task_scene(TaskKind::film, 3, 2.0, 0.3, rng, site);
  int statics = 0, movers = 0;
  for (const auto& o : s.obstacles) {
    EXPECT_EQ(shape_radius(o.shape), 0.3);
    if (std::holds_alternative<StaticMotion>(o.motion)) ++statics;
    if (std::holds_alternative<LinearMotion>(o.motion)) ++movers;
  }
  EXPECT_EQ(statics, 3);
  EXPECT_EQ(movers, 3);
  EXPECT_THROW(spawn_task_scene(TaskKind::follow, 1, 1.0, 0.3, rng, SpawnSite{}),
               std::invalid_argument);
  EXPECT_THROW(spawn_task_scene(TaskKind::hover, -1, 1.0, 0.3, rng), std::invalid_argument);
}

TEST(SceneJson, RoundTrip) {
  Rng rng = make_rng(13);
  Scene s = spawn_task_scene(TaskKind::hover, 2, 3.0, 0.5, rng);
  s.obstacles.push_back({CapsuleShape{0.3, 1.5}, {4, 4, 1.5}, StaticMotion{}});
  s.obstacles.push_back({SphereShape{0.2}, {0, 4, 2}, LinearMotion{{1, 0, 0}, 12}});
  s.obstacles.push_back(
      {SphereShape{0.2}, {0, 0, 2}, WaypointLoopMotion{{{0, 0, 2}, {3, 0, 2}}, 1.0, 0, 0.0}});
  const Scene back = scene_from_json(scene_to_json(s));
  ASSERT_EQ(back.obstacles.size(), s.obstacles.size());
  for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
    EXPECT_EQ(back.obstacles[i].position, s.obstacles[i].position);
    EXPECT_EQ(shape_radius(back.obstacles[i].shape), shape_radius(s.obstacles[i].shape));
    EXPECT_EQ(back.obstacles[i].motion.index(), s.obstacles[i].motion.index());
  }
  EXPECT_EQ(scene_to_json(back), scene_to_json(s));
}

TEST(SceneJson, RejectsUnknownKeysAndBadValues) {
  auto j = nlohmann::json::parse(R"({"obstacles":[{"shape":"sphere","params":{"radius":1},
      "position":[0,0,1],"motion":{"kind":"static"}}],"ground_height":0})");
  EXPECT_NO_THROW(scene_from_json(j));
  auto bad = j;
  bad["colour"] = "red";
  EXPECT_THROW(scene_from_json(bad), std::invalid_argument);
  bad = j;
  bad["obstacles"][0]["params"]["radius"] = -1;
  EXPECT_THROW(scene_from_json(bad), std::invalid_argument);
  bad = j;
  bad["obstacles"][0]["motion"]["kind"] = "teleport";
  EXPECT_THROW(scene_from_json(bad), std::invalid_argument);
}

}  // namespace
}  // namespace panoavoid
