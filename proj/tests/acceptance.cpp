// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. `--only 1,3` runs a subset; `--artifacts DIR`
// keeps the trained checkpoints and evaluation reports.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "panoavoid/cli.hpp"
#include "panoavoid/panoavoid.hpp"
#include "test_util.hpp"

namespace panoavoid {
namespace {

using Clock = std::chrono::steady_clock;
using TD = Tensor<double>;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. gradient fidelity

Outcome gradient_fidelity() {
  constexpr double kTol = 1e-5;
  using testing::gradient_check;
  using testing::random_leaf;
  using testing::random_tensor;
  Rng rng = make_rng(101);
  std::vector<std::pair<std::string, double>> errs;

  {
    TD x = random_leaf({5}, rng), w = random_leaf({4, 5}, rng), b = random_leaf({4}, rng);
    errs.push_back({"linear", gradient_check([&] { return sum(tanh(linear(x, w, b))); }, {&x, &w, &b})});
  }
  for (PadMode m : {PadMode::zero, PadMode::circular_longitude}) {
    TD x = random_leaf({2, 5, 6}, rng), w = random_leaf({3, 2, 3, 3}, rng), b = random_leaf({3}, rng);
    errs.push_back({m == PadMode::zero ? "conv2d" : "conv2d_circular",
                    gradient_check([&] { return sum(tanh(conv2d(x, w, b, 2, 1, m))); }, {&x, &w, &b})});
  }
  {
    TD x = random_leaf({2, 8, 16}, rng), w = random_leaf({2, 2, 3, 3}, rng), b = random_leaf({2}, rng);
    const TD proj = random_tensor({2 * 4 * 8}, rng);
    errs.push_back({"sphere_conv",
                    gradient_check([&] { return dot(flatten(sphere_conv2d(x, w, b, 2)), proj); },
                                   {&x, &w, &b})});
  }
  {
    TD x = random_leaf({3}, rng), h = random_leaf({4}, rng);
    GruParams<double> g{random_leaf({12, 3}, rng), random_leaf({12, 4}, rng), random_leaf({12}, rng),
                        random_leaf({12}, rng)};
    errs.push_back({"gru", gradient_check([&] { return sum(square(gru_cell(x, h, g))); },
                                          {&x, &h, &g.w_ih, &g.w_hh, &g.b_ih, &g.b_hh})});
  }
  {
    TD x = random_leaf({6}, rng), y = random_leaf({6}, rng);
    errs.push_back({"activations", gradient_check(
                                       [&] {
                                         return add(sum(mul(leaky_relu(x, 0.01), sigmoid(y))),
                                                    sum(softplus(mul(x, y), 32.0)));
                                       },
                                       {&x, &y})});
    errs.push_back({"smooth_l1_clip", gradient_check(
                                          [&] { return sum(smooth_l1(smooth_clip_norm(scale(x, 3.0), 2.0))); },
                                          {&x})});
  }
  {
    testing::ReplayFixture fx;
    fx.loss.w_vpred = 0;
    errs.push_back({"rollout_5_steps", gradient_check([&] { return fx.loss_value(); }, fx.p.pointers())});
  }
  {
    testing::ReplayFixture fx;
    errs.push_back({"rollout_5_steps_vpred_head",
                    gradient_check([&] { return fx.loss_value(); }, fx.head("vhat."))});
  }
  Outcome o{true, ""};
  double worst = 0;
  std::string worst_name;
  for (const auto& [name, e] : errs) {
    if (!(e < kTol)) o.pass = false;
    if (!(e <= worst)) worst = e, worst_name = name;
  }
  o.detail = std::to_string(errs.size()) + " checks, worst rel err " + fmt(worst) + " (" + worst_name +
             "), tol " + fmt(kTol);
  return o;
}

// ---------------------------------------------------------------------------
// 2. render equivariance

Outcome render_equivariance() {
  const EquirectGrid g{16, 32};
  Rng rng = make_rng(202);
  int mismatches = 0;
  for (int scene_i = 0; scene_i < 20; ++scene_i) {
    Scene s;
    const int n = 1 + static_cast<int>(uniform(rng, 0, 6));
    for (int i = 0; i < n; ++i) {
      const Vec3 pos{uniform(rng, -8, 8), uniform(rng, -8, 8), uniform(rng, 0, 5)};
      if (uniform(rng, 0, 1) < 0.5) {
        s.obstacles.push_back({SphereShape{uniform(rng, 0.2, 1.5)}, pos, StaticMotion{}});
      } else {
        s.obstacles.push_back({CapsuleShape{uniform(rng, 0.2, 0.8), uniform(rng, 0.5, 3)}, pos, StaticMotion{}});
      }
    }
    const Vec3 p{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 1, 3)};
    const DepthImage base = render_equirect(s, p, 0.0, g);
    const int k = 1 + static_cast<int>(uniform(rng, 0, g.width - 1));
    const DepthImage rot = render_equirect(s, p, 2 * std::numbers::pi * k / g.width, g);
    if (rot.values != column_shift(base, k).values) ++mismatches;
  }
  const std::size_t c = 2, h = 16, w = 32;
  const TD x = testing::random_tensor({c, h, w}, rng);
  const TD wt = testing::random_tensor({3, c, 3, 3}, rng);
  const TD b = testing::random_tensor({3}, rng);
  double worst = 0;
  for (int k : {1, 7, 16}) {
    auto shift = [&](const TD& t) {
      std::vector<double> out(t.size());
      const std::size_t ch = t.dim(0), hh = t.dim(1), ww = t.dim(2);
      for (std::size_t q = 0; q < ch; ++q)
        for (std::size_t r = 0; r < hh; ++r)
          for (std::size_t col = 0; col < ww; ++col)
            out[(q * hh + r) * ww + col] = t[(q * hh + r) * ww + (col + k) % ww];
      return TD(t.shape(), std::move(out));
    };
    const TD a = sphere_conv2d(shift(x), wt, b, 1), bb = shift(sphere_conv2d(x, wt, b, 1));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - bb[i]));
  }
  return {mismatches == 0 && worst < 1e-4,
          std::to_string(20 - mismatches) + "/20 scenes bitwise equal; SphereConv shift L_inf " +
              fmt(worst) + " (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// 3. dynamics oracle

Outcome dynamics_oracle() {
  const SimConfig cfg = testing::unsaturated_sim();
  const double dt = 1.0 / 15;
  UavState s;
  s.p = {0.5, -1, 2};
  s.v = {0.2, 0, -0.1};
  s.yaw = 0.3;
  const Vec3 u{1.0, -0.5, 0.25};
  const Vec3 uw = quat_rotate(yaw_quaternion(s.yaw), u);
  double worst = 0;
  UavState cur = s;
  for (int k = 1; k <= 90; ++k) {
    cur = step(cur, u, dt, cfg);
    const UavState ref = testing::cascaded_lag_closed_form(s, uw, dt, cfg, k);
    worst = std::max({worst, (cur.p - ref.p).norm(), (cur.v - ref.v).norm(), (cur.a - ref.a).norm()});
  }
  const SimConfig real;
  Rng rng = make_rng(303);
  TD u0 = testing::random_leaf({3}, rng, -2, 2);
  const TD u_rest = testing::random_tensor({3}, rng, -2, 2);
  const TD w = testing::random_tensor({3}, rng);
  UavState s0;
  s0.yaw = 0.6;
  const double grad_err = testing::gradient_check(
      [&] {
        auto st = TensorState<double>::from(s0);
        st = step(st, u0, dt, real);
        for (int i = 1; i < 10; ++i) st = step(st, u_rest, dt, real);
        return dot(st.p, w);
      },
      {&u0});
  return {worst < 1e-6 && grad_err < 1e-4, "closed-form max err " + fmt(worst) + " (tol 1e-6); dp_T/du_0 rel err " +
                                               fmt(grad_err) + " (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// 4. loss points

Outcome loss_points() {
  const LossConfig cfg;
  const double m = cfg.safety_margin;
  const auto [avoid, c0] = safety_losses_from_approach(TD::scalar(0.5 + m), TD::scalar(2.0), cfg);
  const auto [a1, collide] = safety_losses_from_approach(TD::scalar(0.1 + m), TD::scalar(1.0), cfg);
  const LossTerms<double> unit{TD::scalar(1), TD::scalar(1), TD::scalar(1),
                               TD::scalar(1), TD::scalar(1), TD::scalar(1)};
  const double total = weighted_total(unit, cfg).item();
  const double e1 = std::abs(avoid.item() - 0.5);
  const double e2 = std::abs(collide.item() - std::log1p(std::exp(-3.2)));
  const double e3 = std::abs(total - 6.511);
  return {e1 < 1e-9 && e2 < 1e-9 && e3 < 1e-9,
          "avoid " + fmt(avoid.item(), 12) + ", collide " + fmt(collide.item(), 12) + ", unit total " +
              fmt(total, 12) + " (tol 1e-9)"};
}

// ---------------------------------------------------------------------------
// 5. metric oracle

Outcome metric_oracle() {
  auto with_time = [](double t) {
    TrialLog l;
    if (t > 0) {
      l.intervals.push_back({2.0, 2.0 + t});
      l.collision_time = t;
    }
    return l;
  };
  const EvalReport r = aggregate({with_time(0), with_time(1.2), with_time(0)});
  const bool example = r.sr == 2.0 / 3.0 && std::abs(r.ct - 0.4) < 1e-15;

  TaskSpec task;
  task.duration = 15;
  task.start_offset = 0;
  task.obstacle_speed = 4;
  task.density = 3;
  Rng init = make_rng(505);
  const auto policy = init_policy<float>(panoramic_spec(16, 32, {2, 2, 2, 2, 2, 2}, 8), init);
  std::vector<TrialLog> logs;
  const EvalReport rep = evaluate(task, policy, 6, 50, &logs);
  double ct = 0;
  std::size_t ok = 0;
  for (const auto& l : logs) {
    double t = 0;
    bool hit = false;
    for (const auto& s : l.steps) {
      if (s.collision) t += s.dt, hit = true;
    }
    ct += t;
    ok += hit ? 0 : 1;
  }
  ct /= static_cast<double>(logs.size());
  const double sr = static_cast<double>(ok) / static_cast<double>(logs.size());
  const bool rescan = rep.sr == sr && std::abs(rep.ct - ct) <= 1e-12 * std::max(1.0, ct);
  return {example && rescan, "{0,1.2,0}: SR " + format_sr(r) + " CT " + fmt(r.ct) + "; re-scan of " +
                                 std::to_string(logs.size()) + " trials SR " + fmt(sr) + " CT " + fmt(ct) +
                                 " vs aggregate SR " + fmt(rep.sr) + " CT " + fmt(rep.ct)};
}

// ---------------------------------------------------------------------------
// 6-8. trained desk-scale policies

struct DeskRun {
  TrainConfig cfg;
  PolicyParams<float> params;
  double seconds = 0;
};

constexpr std::size_t kEvalTrials = 10;
constexpr std::uint64_t kEvalSeed = 1000;

TrainConfig desk_config(YawMode mode) {
  TrainConfig cfg = desk_scale_preset(TrainConfig{});
  cfg.yaw_mode = mode;
  return cfg;
}

TaskSpec desk_task(const TrainConfig& cfg) {
  TaskSpec t;
  t.density = cfg.scene.density;
  t.d_max = cfg.d_max;
  t.r_uav = cfg.r_uav;
  t.sim = cfg.sim;
  t.loss = cfg.loss;
  return t;
}

class Artifacts {
 public:
  explicit Artifacts(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }
  void checkpoint(const std::string& name, const PolicyParams<float>& p) const {
    if (!dir_.empty()) write_checkpoint(dir_ + "/" + name, policy_to_checkpoint(p));
  }
  void json(const std::string& name, const nlohmann::json& j) const {
    if (!dir_.empty()) detail::write_text(dir_ + "/" + name, j.dump(2) + "\n");
  }

 private:
  std::string dir_;
};

DeskRun train_desk(YawMode mode, const Artifacts& art) {
  DeskRun r;
  r.cfg = desk_config(mode);
  const auto t0 = Clock::now();
  r.params = train(r.cfg).params;
  r.seconds = seconds_since(t0);
  art.checkpoint(mode == YawMode::fixed_random ? "desk_fixed.ckpt" : "desk_free.ckpt", r.params);
  return r;
}

Outcome desk_learning(const DeskRun& run, const Artifacts& art) {
  const TaskSpec task = desk_task(run.cfg);
  const auto t0 = Clock::now();
  const EvalReport trained = evaluate(task, run.params, kEvalTrials, kEvalSeed);
  const EvalReport zero = evaluate(task, zero_policy<float>(run.cfg.spec), kEvalTrials, kEvalSeed);
  art.json("desk_learning.json", {{"trained", report_to_json(trained)}, {"zero", report_to_json(zero)}});
  const double ratio = zero.ct > 0 ? trained.ct / zero.ct : INFINITY;
  const bool pass = trained.ct <= 0.25 * zero.ct && trained.mean_trk < zero.mean_trk &&
                    run.seconds + seconds_since(t0) <= 1800;
  return {pass, "CT " + fmt(trained.ct) + " s vs zero-command " + fmt(zero.ct) + " s (ratio " + fmt(ratio) +
                    ", need <= 0.25); trk " + fmt(trained.mean_trk) + " vs " + fmt(zero.mean_trk) + "; SR " +
                    format_sr(trained) + " vs " + format_sr(zero) + "; train " + fmt(run.seconds, 4) + " s"};
}

Outcome heading_trend(const DeskRun& fixed, const DeskRun& free, double train_seconds, const Artifacts& art) {
  const auto t0 = Clock::now();
  const HeadingComparison c =
      heading_ablation(desk_task(fixed.cfg), fixed.params, free.params, 8, kEvalTrials, kEvalSeed);
  nlohmann::json j;
  for (std::size_t k = 0; k < c.headings.size(); ++k) {
    j["per_heading"].push_back({{"heading", c.headings[k]},
                                {"fixed", report_to_json(c.fixed[k])},
                                {"free", report_to_json(c.free[k])}});
  }
  art.json("heading_ablation.json", j);
  const double total = train_seconds + seconds_since(t0);
  const bool pass = c.fixed_mean_sr >= c.free_mean_sr && c.fixed_sr_variance < c.free_sr_variance && total <= 3600;
  // CT per heading is reported for information only.
  const auto ct_stats = [](const std::vector<EvalReport>& rs) {
    double m = 0, v = 0;
    for (const auto& r : rs) m += r.ct;
    m /= static_cast<double>(rs.size());
    for (const auto& r : rs) v += (r.ct - m) * (r.ct - m);
    return std::pair{m, v / static_cast<double>(rs.size())};
  };
  const auto [fixed_ct, fixed_ct_var] = ct_stats(c.fixed);
  const auto [free_ct, free_ct_var] = ct_stats(c.free);
  return {pass, "mean SR fixed " + fmt(c.fixed_mean_sr) + " vs free " + fmt(c.free_mean_sr) +
                    "; SR variance fixed " + fmt(c.fixed_sr_variance) + " vs free " + fmt(c.free_sr_variance) +
                    " (info: mean CT fixed " + fmt(fixed_ct) + " s var " + fmt(fixed_ct_var) + " vs free " +
                    fmt(free_ct) + " s var " + fmt(free_ct_var) + "); " + fmt(total, 4) + " s incl. both trainings"};
}

Outcome noise_trend(const DeskRun& fixed, const Artifacts& art) {
  const auto entries = sweep_noise(desk_task(fixed.cfg), fixed.params, {0.0, 0.2}, kEvalTrials, kEvalSeed);
  const EvalReport& clean = entries[0].report;
  const EvalReport& noisy = entries[1].report;
  art.json("noise_sweep.json", {{"gamma_0", report_to_json(clean)}, {"gamma_0.2", report_to_json(noisy)}});
  const bool pass = noisy.sr >= 0.6 * clean.sr && noisy.ct <= clean.ct + 1.0;
  return {pass, "gamma 0: SR " + format_sr(clean) + " CT " + fmt(clean.ct) + " s; gamma 0.2: SR " +
                    format_sr(noisy) + " CT " + fmt(noisy.ct) + " s"};
}

// ---------------------------------------------------------------------------
// 9. architecture conformance

Outcome architecture() {
  const PolicySpec s = panoramic_spec();
  const std::vector<Shape> expected = {{32, 32, 64}, {64, 16, 32}, {64, 16, 32}, {64, 8, 16},
                                       {128, 8, 16}, {128, 8, 16}, {16384},     {256},
                                       {256},        {256},        {3}};
  const auto shapes = layer_shapes(s);
  int matched = 0;
  for (std::size_t i = 0; i < std::min(shapes.size(), expected.size()); ++i) {
    matched += shapes[i].output == expected[i] ? 1 : 0;
  }
  Rng rng = make_rng(909);
  const auto p = init_policy<float>(s, rng);
  std::vector<Shape> trace;
  policy_forward(p, Tensor<float>(Shape{1, 64, 128}, 0.5f), Tensor<float>(Shape{kObsDim}, 0.f),
                 zero_hidden<float>(s), &trace);
  const bool pass = shapes.size() == expected.size() && matched == static_cast<int>(expected.size()) &&
                    trace == expected && p.count() >= 4'000'000 && p.count() <= 11'000'000;
  return {pass, std::to_string(matched) + "/" + std::to_string(expected.size()) +
                    " layer shapes match (forward trace " + (trace == expected ? "agrees" : "differs") +
                    "); parameters " + std::to_string(p.count())};
}

// ---------------------------------------------------------------------------
// 10. determinism

Outcome determinism() {
  TrainConfig cfg = desk_config(YawMode::fixed_random);
  cfg.steps = 3;
  auto run = [&] { return encode_checkpoint(policy_to_checkpoint(train(cfg).params)); };
  const std::string ck_a = run(), ck_b = run();
  const auto policy = policy_from_checkpoint<float>(decode_checkpoint(ck_a));
  TaskSpec task = desk_task(cfg);
  task.duration = 10;
  task.start_offset = 0;
  auto report = [&] { return report_to_json(evaluate(task, policy, 4, 7)).dump(); };
  const std::string r_a = report(), r_b = report();

  const auto dir = std::filesystem::temp_directory_path() / "panoavoid_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "train.json", R"({"steps": 2})");
  detail::write_text(dir / "task.json", R"({"duration": 5.0, "start_offset": 0.0})");
  auto cli = [&](const std::string& tag) {
    std::ostringstream out, err;
    const std::string cfg_path = (dir / "train.json").string(), out_dir = (dir / ("t" + tag)).string();
    const std::vector<std::string> train_args = {"panoavoid", "train",  "--config", cfg_path,
                                                 "--desk-scale", "--seed", "4",   "--out", out_dir};
    std::vector<const char*> argv;
    for (const auto& a : train_args) argv.push_back(a.c_str());
    if (run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != 0) return std::string("train failed");
    const std::string ck = out_dir + "/checkpoint_final.ckpt", eval_dir = (dir / ("e" + tag)).string(),
                      task_path = (dir / "task.json").string();
    const std::vector<std::string> eval_args = {"panoavoid", "eval",    "--checkpoint", ck,     "--config",
                                                task_path,   "--trials", "3",           "--out", eval_dir};
    argv.clear();
    for (const auto& a : eval_args) argv.push_back(a.c_str());
    if (run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != 0) return std::string("eval failed");
    std::string all;
    for (const auto& f : {ck, eval_dir + "/report.json", eval_dir + "/trial_000.csv", out_dir + "/loss.csv"}) {
      std::ifstream in(f, std::ios::binary);
      all += std::string(std::istreambuf_iterator<char>(in), {}) + '\0';
    }
    return all;
  };
  const std::string c_a = cli("a"), c_b = cli("b");
  std::filesystem::remove_all(dir);
  const bool pass = ck_a == ck_b && r_a == r_b && c_a == c_b && c_a.size() > 20;
  return {pass, std::string("checkpoints ") + (ck_a == ck_b ? "identical" : "differ") + ", reports " +
                    (r_a == r_b ? "identical" : "differ") + ", CLI train+eval outputs " +
                    (c_a == c_b ? "identical" : "differ")};
}

}  // namespace
}  // namespace panoavoid

int main(int argc, char** argv) {
  using namespace panoavoid;
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string artifacts;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--artifacts", artifacts, "directory for trained checkpoints and reports");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  const Artifacts art(artifacts);

  bool all = true;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << id << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << "  [" << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  };

  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "render equivariance", render_equivariance);
  report(3, "dynamics oracle", dynamics_oracle);
  report(4, "loss points", loss_points);
  report(5, "metric oracle", metric_oracle);
  if (wanted(6) || wanted(7) || wanted(8)) {
    const DeskRun fixed = train_desk(YawMode::fixed_random, art);
    report(6, "desk-scale learning", [&] { return desk_learning(fixed, art); });
    if (wanted(7)) {
      const DeskRun free = train_desk(YawMode::free, art);
      report(7, "fixed-yaw ablation trend",
             [&] { return heading_trend(fixed, free, fixed.seconds + free.seconds, art); });
    }
    report(8, "noise robustness trend", [&] { return noise_trend(fixed, art); });
  }
  report(9, "architecture conformance", architecture);
  report(10, "determinism", determinism);
  return all ? 0 : 1;
}
