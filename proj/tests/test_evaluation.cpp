// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "panoavoid/evaluation.hpp"

namespace panoavoid {
namespace {

PolicySpec desk_spec() { return panoramic_spec(16, 32, {2, 2, 2, 2, 2, 2}, 8); }

TaskSpec short_hover(double duration = 4.0) {
  TaskSpec t;
  t.duration = duration;
  return t;
}

TrialLog log_with_collision_time(double seconds) {
  TrialLog l;
  if (seconds > 0) {
    l.intervals.push_back({1.0, 1.0 + seconds});
    l.collision_time = seconds;
  }
  return l;
}

// Independent re-scan: CT from per-step flags, SR from any flagged step.
std::pair<double, double> rescan(const std::vector<TrialLog>& logs) {
  double ct = 0;
  int ok = 0;
  for (const auto& l : logs) {
    double t = 0;
    bool hit = l.diverged;
    for (const auto& s : l.steps) {
      if (s.collision) {
        t += s.dt;
        hit = true;
      }
    }
    if (l.diverged) t += l.intervals.back().end - l.intervals.back().start;
    ct += t;
    ok += hit ? 0 : 1;
  }
  return {static_cast<double>(ok) / logs.size(), ct / logs.size()};
}

TEST(GoalStream, HoverFilmFollow) {
  TaskSpec hover;
  EXPECT_EQ(goal_stream(hover, 0).goal, hover.anchor);
  EXPECT_EQ(goal_stream(hover, 77.7).goal, hover.anchor);

  TaskSpec film;
  film.kind = TaskKind::film;
  film.waypoints = {{0, 0, 3}, {10, 0, 3}};
  film.path_speed = 1.0;
  const GoalSample g = goal_stream(film, 5.0);
  EXPECT_NEAR((g.goal - Vec3{5, 0, 3}).norm(), 0.0, 1e-12);
  EXPECT_NEAR(g.psi_c, std::atan2(film.subject.y - 0, film.subject.x - 5), 1e-12);

  TaskSpec follow;
  follow.kind = TaskKind::follow;
  Rng rng = make_rng(1);
  follow.target_path = random_target_path(rng, {0, 0, 3});
  for (double t : {0.0, 3.3, 17.0, 100.0}) {
    const GoalSample s = goal_stream(follow, t);
    EXPECT_NEAR((s.goal - s.target).norm(), 5.0, 1e-9);
  }
}

TEST(RunTrial, EmptySceneNoCollisions) {
  TaskSpec t = short_hover();
  t.density = 0;
  const auto log = run_trial(t, zero_policy<float>(desk_spec()), 3);
  EXPECT_TRUE(log.intervals.empty());
  EXPECT_EQ(log.collision_time, 0.0);
  EXPECT_NEAR(log.steps.back().t, t.duration, 1e-9);
}

TEST(RunTrial, StationaryUavIsHitByThrownObstacles) {
  TaskSpec t = short_hover(10.0);
  t.start_offset = 0;
  t.obstacle_speed = 5.0;
  const auto log = run_trial(t, zero_policy<float>(desk_spec()), 4);
  ASSERT_FALSE(log.intervals.empty());
  EXPECT_LT(log.intervals.front().start, 5.0);
}

TEST(RunTrial, SameSeedIsBitIdenticalAndIntervalsWellFormed) {
  TaskSpec t = short_hover(15.0);
  t.start_offset = 0;
  Rng init = make_rng(5);
  const auto p = init_policy<float>(desk_spec(), init);
  const auto a = run_trial(t, p, 9), b = run_trial(t, p, 9);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].p, b.steps[i].p);
    EXPECT_EQ(a.steps[i].collision, b.steps[i].collision);
  }
  double prev_end = 0;
  for (const auto& iv : a.intervals) {
    EXPECT_GE(iv.start, prev_end);
    EXPECT_GT(iv.end, iv.start);
    EXPECT_LE(iv.end, t.duration + 1e-9);
    prev_end = iv.end;
  }
}

TEST(RunTrial, DivergenceFailsWithRemainingTime) {
  auto p = zero_policy<float>(desk_spec());
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    if (p.names[i] == "head.bias") p.tensors[i].mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  }
  TaskSpec t = short_hover(3.0);
  t.density = 0;
  const auto log = run_trial(t, p, 1);
  EXPECT_TRUE(log.diverged);
  EXPECT_NEAR(log.collision_time, 3.0, 1e-12);
  const auto r = aggregate({log});
  EXPECT_EQ(r.successes, 0u);
  EXPECT_NEAR(r.ct, 3.0, 1e-12);
}

TEST(Aggregate, FormulaCases) {
  const auto r = aggregate({log_with_collision_time(0), log_with_collision_time(1.2),
                            log_with_collision_time(0)});
  EXPECT_NEAR(r.sr, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.ct, 0.4, 1e-15);
  std::vector<TrialLog> clean(10);
  const auto c = aggregate(clean);
  EXPECT_EQ(c.sr, 1.0);
  EXPECT_EQ(c.ct, 0.0);
}

TEST(Aggregate, MatchesIndependentRescan) {
  TaskSpec t = short_hover(12.0);
  t.start_offset = 0;
  t.obstacle_speed = 4.0;
  Rng init = make_rng(6);
  const auto p = init_policy<float>(desk_spec(), init);
  std::vector<TrialLog> logs;
  const auto r = evaluate(t, p, 4, 20, &logs);
  const auto [sr, ct] = rescan(logs);
  EXPECT_EQ(r.sr, sr);
  EXPECT_NEAR(r.ct, ct, 1e-12);
  EXPECT_EQ(r.sr == 1.0, r.ct == 0.0);
  for (std::size_t i = 0; i < logs.size(); ++i) EXPECT_EQ(logs[i].seed, 20 + i);
}

TEST(Sweeps, NoiseSizeBookkeeping) {
  TaskSpec t = short_hover(2.0);
  const auto p = zero_policy<float>(desk_spec());
  const auto base = evaluate(t, p, 2, 7);
  const auto noise = sweep_noise(t, p, {0.0, 0.2}, 2, 7);
  ASSERT_EQ(noise.size(), 2u);
  EXPECT_EQ(noise[0].value, 0.0);
  EXPECT_EQ(noise[0].report.ct, base.ct);
  EXPECT_EQ(noise[1].report.config["noise_gamma"], 0.2);
  EXPECT_EQ(kDefaultNoiseLevels, (std::vector<double>{0.0, 0.05, 0.1, 0.2}));
  EXPECT_EQ(kDefaultObstacleRadii, (std::vector<double>{0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5}));
  const auto size = sweep_size(t, p, {0.01, 0.5}, 2, 7);
  ASSERT_EQ(size.size(), 2u);
  for (const auto& e : size) {
    EXPECT_EQ(e.report.config["obstacle_size"], e.value);
    EXPECT_EQ(e.report.config["obstacle_speed"], 5.0);
    EXPECT_TRUE(std::isfinite(e.report.ct));
  }
}

TEST(Sweeps, HeadingAblationBookkeeping) {
  TaskSpec t = short_hover(1.0);
  const auto p = zero_policy<float>(desk_spec());
  const auto c = heading_ablation(t, p, p, 8, 2, 0);
  EXPECT_EQ(c.headings.size(), 8u);
  EXPECT_EQ(c.fixed.size(), 8u);
  EXPECT_EQ(c.free.size(), 8u);
  for (const auto& r : c.fixed) EXPECT_EQ(r.n, 2u);
  EXPECT_NEAR(c.headings[2], std::numbers::pi / 2, 1e-15);
  EXPECT_EQ(c.fixed_sr_variance, c.free_sr_variance);
  EXPECT_THROW(heading_ablation(t, p, p, 0, 2, 0), std::invalid_argument);
}

TEST(Reports, JsonTableAndCsv) {
  auto r = aggregate({log_with_collision_time(0), log_with_collision_time(1.2),
                      log_with_collision_time(0)});
  const auto j = report_to_json(r);
  EXPECT_EQ(j["successes"], 2);
  EXPECT_EQ(j["trials"].size(), 3u);
  EXPECT_EQ(format_sr(r), "2/3");
  const std::string table = summary_table("gamma", {{"0.00", r}});
  EXPECT_NE(table.find("2/3"), std::string::npos);
  EXPECT_NE(table.find("0.40"), std::string::npos);
  TrialLog l;
  l.steps.push_back({});
  EXPECT_EQ(trial_csv(l).substr(0, trial_csv(l).find('\n')),
            "t,px,py,pz,vx,vy,vz,ux,uy,uz,clearance,collision");
}

TEST(TaskSpec, Validation) {
  TaskSpec t;
  EXPECT_NO_THROW(t.validate());
  t.duration = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = TaskSpec{};
  t.kind = TaskKind::film;
  t.waypoints = {{0, 0, 0}};
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace panoavoid
