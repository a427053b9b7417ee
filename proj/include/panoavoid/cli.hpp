// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command implementations behind the `panoavoid` executable. Each returns a
// process exit code: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "panoavoid/checkpoint.hpp"
#include "panoavoid/evaluation.hpp"
#include "panoavoid/json_util.hpp"
#include "panoavoid/render.hpp"
#include "panoavoid/training.hpp"
#include "panoavoid/world.hpp"

namespace panoavoid {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Bad arguments or configuration content (exit code 1).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// Overlays `patch` onto `base` after rejecting keys `base` does not have.
template <class C>
C overlay_config(const C& base, const nlohmann::json& patch, const std::string& where) {
  const nlohmann::json ref = base;
  reject_unknown_config_keys(patch, ref, where);
  nlohmann::json merged = ref;
  merged.merge_patch(patch);
  try {
    return merged.get<C>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(where + ": " + e.what());
  }
}

inline std::string loss_csv_header() { return "step,trk,avoid,collide,acc,jerk,vpred,total,lr\n"; }

inline std::string loss_csv_row(const TrainStepLog& s) {
  std::ostringstream os;
  os << std::setprecision(9) << s.step << ',' << s.loss.trk << ',' << s.loss.avoid << ','
     << s.loss.collide << ',' << s.loss.acc << ',' << s.loss.jerk << ',' << s.loss.vpred << ','
     << s.loss.total << ',' << s.lr << '\n';
  return os.str();
}

inline std::string checkpoint_name(std::size_t step) {
  std::ostringstream os;
  os << "checkpoint_" << std::setw(6) << std::setfill('0') << step << ".ckpt";
  return os.str();
}

inline std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("'" + tok + "' is not a number");
    }
  }
  return out;
}

template <class F>
int guarded(std::ostream& err, F body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;  // optional JSON overriding TrainConfig fields
  bool desk_scale = false;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
};

inline TrainConfig resolve_train_config(const TrainArgs& a) {
  nlohmann::json patch = nlohmann::json::object();
  if (!a.config.empty()) patch = detail::read_json_file(a.config);
  if (!patch.is_object()) throw UsageError("train config must be a JSON object");
  TrainConfig base;
  if (a.desk_scale || patch.value("desk_scale", false)) base = desk_scale_preset(base);
  TrainConfig cfg = detail::overlay_config(base, patch, "train config");
  if (a.desk_scale) {
    // flag wins over file contents for the preset's defining fields
    const TrainConfig preset = desk_scale_preset(cfg);
    cfg.desk_scale = true;
    cfg.spec = preset.spec;
    cfg.T = preset.T;
    cfg.tbptt_window = std::min(cfg.tbptt_window, cfg.T);
    cfg.steps = preset.steps;
    cfg.scene.density = preset.scene.density;
  }
  if (a.seed) cfg.seed = *a.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

/// Writes config.resolved.json, loss.csv, periodic and final checkpoints.
inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const TrainConfig cfg = resolve_train_config(a);
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "config.resolved.json", nlohmann::json(cfg).dump(2) + "\n");
    std::ofstream csv(dir / "loss.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write '" + (dir / "loss.csv").string() + "'");
    csv << detail::loss_csv_header();
    const nlohmann::json cfg_json = cfg;
    auto save = [&](const PolicyParams<float>& p, std::size_t step, const std::string& name) {
      write_checkpoint((dir / name).string(),
                       policy_to_checkpoint(p, {{"train_config", cfg_json}, {"step", step}}));
    };
    const TrainResult res = train(cfg, [&](const TrainStepLog& s, const PolicyParams<float>& p) {
      csv << detail::loss_csv_row(s);
      if (cfg.checkpoint_every > 0 && (s.step + 1) % cfg.checkpoint_every == 0 &&
          s.step + 1 < cfg.steps) {
        save(p, s.step + 1, detail::checkpoint_name(s.step + 1));
      }
    });
    save(res.params, cfg.steps, "checkpoint_final.ckpt");
    std::size_t skipped = 0;
    for (const auto& h : res.history) skipped += h.skipped ? 1 : 0;
    out << "trained " << cfg.steps << " steps (" << skipped << " skipped); final loss "
        << res.history.back().loss.total << "\n"
        << "checkpoint: " << (dir / "checkpoint_final.ckpt").string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// eval / sweep

struct EvalArgs {
  std::string checkpoint;
  std::string checkpoint_free;  // heading sweep: the free-yaw policy
  std::string config;           // optional TaskSpec JSON
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::string out = "eval";
  std::string values;  // sweep list override, comma separated
};

inline TaskSpec resolve_task(const EvalArgs& a) {
  nlohmann::json patch = nlohmann::json::object();
  if (!a.config.empty()) patch = detail::read_json_file(a.config);
  if (!patch.is_object()) throw UsageError("task config must be a JSON object");
  TaskSpec t = detail::overlay_config(TaskSpec{}, patch, "task config");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

inline PolicyParams<float> load_policy(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  return policy_from_checkpoint<float>(read_checkpoint(path));
}

/// report.json, summary.txt and per-trial CSV / scene files.
inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (a.trials < 1) throw UsageError("--trials must be >= 1");
    const TaskSpec task = resolve_task(a);
    const PolicyParams<float> policy = load_policy(a.checkpoint);
    std::vector<TrialLog> logs;
    const EvalReport r = evaluate(task, policy, a.trials, a.seed, &logs);
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
    const std::string table = summary_table(to_string(task.kind), {{to_string(task.kind), r}});
    detail::write_text(dir / "summary.txt", table);
    for (std::size_t i = 0; i < logs.size(); ++i) {
      std::ostringstream stem;
      stem << "trial_" << std::setw(3) << std::setfill('0') << i;
      detail::write_text(dir / (stem.str() + ".csv"), trial_csv(logs[i]));
      Scene s;
      s.obstacles = logs[i].final_obstacles;
      detail::write_text(dir / (stem.str() + "_scene.json"), scene_to_json(s).dump(2) + "\n");
    }
    out << table;
    return kExitOk;
  });
}

inline int cmd_sweep(const std::string& kind, const EvalArgs& a, std::ostream& out,
                     std::ostream& err) {
  return detail::guarded(err, [&] {
    if (kind != "noise" && kind != "size" && kind != "heading") {
      throw UsageError("unknown sweep kind '" + kind + "' (expected noise, size or heading)");
    }
    if (a.trials < 1) throw UsageError("--trials must be >= 1");
    const TaskSpec task = resolve_task(a);
    const PolicyParams<float> policy = load_policy(a.checkpoint);
    nlohmann::json doc;
    doc["kind"] = kind;
    doc["entries"] = nlohmann::json::array();
    std::vector<std::pair<std::string, EvalReport>> rows;
    auto label = [](const std::string& prefix, double v) {
      std::ostringstream os;
      os << prefix << v;
      return os.str();
    };
    if (kind == "noise" || kind == "size") {
      std::vector<double> values =
          a.values.empty() ? (kind == "noise" ? kDefaultNoiseLevels : kDefaultObstacleRadii)
                           : detail::parse_numbers(a.values);
      const auto entries = kind == "noise" ? sweep_noise(task, policy, values, a.trials, a.seed)
                                           : sweep_size(task, policy, values, a.trials, a.seed);
      for (const auto& e : entries) {
        nlohmann::json j = report_to_json(e.report);
        j[kind == "noise" ? "gamma" : "radius"] = e.value;
        doc["entries"].push_back(j);
        rows.push_back({label(kind == "noise" ? "gamma=" : "r=", e.value), e.report});
      }
    } else {
      if (a.checkpoint_free.empty()) {
        throw UsageError("heading sweep needs a second --checkpoint (free-yaw policy)");
      }
      const PolicyParams<float> free_policy = load_policy(a.checkpoint_free);
      std::size_t n_headings = 8;
      if (!a.values.empty()) {
        const auto v = detail::parse_numbers(a.values);
        if (v.size() != 1 || v[0] < 1) throw UsageError("heading sweep takes one heading count");
        n_headings = static_cast<std::size_t>(v[0]);
      }
      const HeadingComparison c =
          heading_ablation(task, policy, free_policy, n_headings, a.trials, a.seed);
      for (std::size_t k = 0; k < c.headings.size(); ++k) {
        nlohmann::json j;
        j["heading"] = c.headings[k];
        j["fixed"] = report_to_json(c.fixed[k]);
        j["free"] = report_to_json(c.free[k]);
        doc["entries"].push_back(j);
        const double deg = c.headings[k] * 180.0 / std::numbers::pi;
        rows.push_back({label("fixed@", deg), c.fixed[k]});
        rows.push_back({label("free@", deg), c.free[k]});
      }
      doc["fixed_mean_sr"] = c.fixed_mean_sr;
      doc["free_mean_sr"] = c.free_mean_sr;
      doc["fixed_sr_variance"] = c.fixed_sr_variance;
      doc["free_sr_variance"] = c.free_sr_variance;
    }
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    detail::write_text(dir / ("sweep_" + kind + ".json"), doc.dump(2) + "\n");
    const std::string table = summary_table(kind, rows);
    detail::write_text(dir / ("sweep_" + kind + ".txt"), table);
    out << table;
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
  std::string scene;  // scene JSON
  std::string pose = "0,0,1.5,0";
  std::string mode = "equirect";
  std::string out = "depth.pgm";
  int height = 64;
  int width = 128;
  double d_max = kDefaultMaxDepth;
};

/// Writes one PGM (equirect, pinhole) or six `<stem>_<face>.pgm` files (cube).
inline int cmd_render(const RenderArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (a.mode != "equirect" && a.mode != "pinhole" && a.mode != "cube") {
      throw UsageError("unknown --mode '" + a.mode + "' (expected equirect, pinhole or cube)");
    }
    const auto pose = detail::parse_numbers(a.pose);
    if (pose.size() != 4) throw UsageError("--pose takes x,y,z,yaw");
    Scene scene;
    if (!a.scene.empty()) {
      try {
        scene = scene_from_json(detail::read_json_file(a.scene));
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("scene: ") + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("scene: ") + e.what());
      }
    }
    const Vec3 p{pose[0], pose[1], pose[2]};
    const double yaw = pose[3];
    const std::filesystem::path path(a.out);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (a.mode == "equirect") {
      write_pgm(a.out, render_equirect(scene, p, yaw, {a.height, a.width}, a.d_max));
      out << "wrote " << a.out << '\n';
    } else if (a.mode == "pinhole") {
      write_pgm(a.out, render_pinhole(scene, p, yaw, 0.5 * std::numbers::pi, a.height, a.width, a.d_max));
      out << "wrote " << a.out << '\n';
    } else {
      const auto faces = render_cubefaces(scene, p, yaw, a.height, a.d_max);
      for (std::size_t i = 0; i < faces.size(); ++i) {
        std::filesystem::path fp = path;
        fp.replace_filename(path.stem().string() + "_" + to_string(kCubeFaces[i]) + ".pgm");
        write_pgm(fp.string(), faces[i]);
        out << "wrote " << fp.string() << '\n';
      }
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// replay

struct ReplayArgs {
  std::string trial_csv;
  std::string scene;  // optional obstacles to draw
  std::string out = "trajectory.svg";
};

/// Top-down SVG of a trial: path, obstacles and colliding segments.
inline std::string trajectory_svg(const std::vector<std::pair<Vec3, bool>>& pts,
                                  const std::vector<Obstacle>& obstacles) {
  const double size = 800, margin = 40;
  double x0 = -1, x1 = 1, y0 = -1, y1 = 1;
  bool first = true;
  auto grow = [&](double x, double y, double r) {
    if (first) {
      x0 = x - r, x1 = x + r, y0 = y - r, y1 = y + r;
      first = false;
    }
    x0 = std::min(x0, x - r), x1 = std::max(x1, x + r);
    y0 = std::min(y0, y - r), y1 = std::max(y1, y + r);
  };
  for (const auto& [p, c] : pts) grow(p.x, p.y, 0.0);
  for (const auto& o : obstacles) grow(o.position.x, o.position.y, shape_radius(o.shape));
  const double span = std::max({x1 - x0, y1 - y0, 1e-6});
  const double s = (size - 2 * margin) / span;
  // world +x right, +y up
  auto sx = [&](double x) { return margin + (x - x0) * s; };
  auto sy = [&](double y) { return size - margin - (y - y0) * s; };
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
     << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n"
     << "<style>.path{stroke:#1f5fbf;stroke-width:2;fill:none}"
        ".collision{stroke:#d62728;stroke-width:4;fill:none}"
        ".obstacle{fill:#999999;fill-opacity:0.5;stroke:#444444}</style>\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& o : obstacles) {
    os << "<circle class=\"obstacle\" cx=\"" << sx(o.position.x) << "\" cy=\"" << sy(o.position.y)
       << "\" r=\"" << shape_radius(o.shape) * s << "\"/>\n";
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec3 a = pts[i - 1].first, b = pts[i].first;
    os << "<line class=\"" << (pts[i].second ? "collision" : "path") << "\" x1=\"" << sx(a.x)
       << "\" y1=\"" << sy(a.y) << "\" x2=\"" << sx(b.x) << "\" y2=\"" << sy(b.y) << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::vector<std::pair<Vec3, bool>> read_trial_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trial CSV '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) return {};
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw UsageError("trial CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cx = col("px"), cy = col("py"), cz = col("pz"), cc = col("collision");
  std::vector<std::pair<Vec3, bool>> pts;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    if (v.size() != header.size()) throw UsageError("malformed trial CSV row: " + line);
    pts.push_back({{v[cx], v[cy], v[cz]}, v[cc] != 0.0});
  }
  return pts;
}

inline int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto pts = read_trial_csv(a.trial_csv);
    std::vector<Obstacle> obstacles;
    if (!a.scene.empty()) obstacles = scene_from_json(detail::read_json_file(a.scene)).obstacles;
    const std::filesystem::path path(a.out);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    detail::write_text(path, trajectory_svg(pts, obstacles));
    out << "wrote " << a.out << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// argument parsing

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"panoramic depth obstacle-avoidance policy: train, evaluate, render"};
  app.require_subcommand(1);

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "train a policy");
  train->add_option("--config", ta.config, "TrainConfig JSON");
  train->add_flag("--desk-scale", ta.desk_scale, "16x32 input, T=150 preset");
  auto* seed_opt = train->add_option("--seed", train_seed, "random seed");
  train->add_option("--out", ta.out, "output directory");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a task");
  eval->add_option("--checkpoint", ea.checkpoint, "policy checkpoint")->required();
  eval->add_option("--config", ea.config, "TaskSpec JSON");
  eval->add_option("--trials", ea.trials, "number of trials");
  eval->add_option("--seed", ea.seed, "first trial seed");
  eval->add_option("--out", ea.out, "output directory");

  EvalArgs sa;
  std::string sweep_kind;
  std::vector<std::string> sweep_ckpts;
  auto* sweep = app.add_subcommand("sweep", "noise, size or heading sweep");
  sweep->add_option("kind", sweep_kind, "noise | size | heading")->required();
  sweep->add_option("--checkpoint", sweep_ckpts, "policy checkpoint (heading: fixed then free)")
      ->required();
  sweep->add_option("--config", sa.config, "TaskSpec JSON");
  sweep->add_option("--trials", sa.trials, "trials per setting");
  sweep->add_option("--seed", sa.seed, "first trial seed");
  sweep->add_option("--out", sa.out, "output directory");
  sweep->add_option("--values", sa.values, "comma-separated gammas / radii, or heading count");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "render depth images of a scene");
  render->add_option("--config", ra.scene, "scene JSON");
  render->add_option("--pose", ra.pose, "x,y,z,yaw");
  render->add_option("--mode", ra.mode, "equirect | pinhole | cube");
  render->add_option("--out", ra.out, "output PGM path");
  render->add_option("--height", ra.height, "image height (cube: face size)");
  render->add_option("--width", ra.width, "image width");
  render->add_option("--d-max", ra.d_max, "saturation depth, m");

  ReplayArgs pa;
  auto* replay = app.add_subcommand("replay", "plot a trial CSV as SVG");
  replay->add_option("trial", pa.trial_csv, "trial CSV")->required();
  replay->add_option("--config", pa.scene, "scene JSON with obstacles to draw");
  replay->add_option("--out", pa.out, "output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  if (train->parsed()) {
    if (seed_opt->count() > 0) ta.seed = train_seed;
    return cmd_train(ta, out, err);
  }
  if (eval->parsed()) return cmd_eval(ea, out, err);
  if (sweep->parsed()) {
    if (sweep_ckpts.size() > 2) {
      err << "error: at most two --checkpoint values\n";
      return kExitUsage;
    }
    sa.checkpoint = sweep_ckpts[0];
    if (sweep_ckpts.size() == 2) sa.checkpoint_free = sweep_ckpts[1];
    return cmd_sweep(sweep_kind, sa, out, err);
  }
  if (render->parsed()) return cmd_render(ra, out, err);
  return cmd_replay(pa, out, err);
}

}  // namespace panoavoid
