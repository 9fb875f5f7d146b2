#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spinrally/checkpoint.hpp"
#include "spinrally/config.hpp"
#include "spinrally/learner/curriculum.hpp"
#include "spinrally/policy.hpp"
#include "spinrally/real2sim.hpp"

#ifndef SPINRALLY_VERSION
#define SPINRALLY_VERSION "0.0.0"
#endif

namespace spinrally {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitRuntime = 3 };

/// Options shared by the subcommands; unset fields fall back to the config.
struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> episodes;
  std::optional<std::size_t> count;
  std::string checkpoint;
  std::string recordings;
  std::string metrics;
  std::ostream* log = &std::cerr;
};

namespace fs = std::filesystem;

inline RunConfig resolve_config(const CommandOptions& o) {
  RunConfig c = o.config_path.empty() ? preset_default7() : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  if (o.episodes) c.eval.episodes = *o.episodes;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline Json eval_report_json(const EvalReport& r) {
  Json h = Json::object();
  for (const auto& [k, v] : r.terminal_histogram) h[k] = v;
  return {{"episodes", r.episodes},
          {"catch_rate", r.catch_rate},
          {"return_rate", r.return_rate},
          {"return_after_catch", r.return_after_catch},
          {"target_error", r.target_error},
          {"terminal_histogram", h}};
}

inline std::string eval_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "episodes            " << r.episodes << '\n'
     << "catch rate          " << r.catch_rate << '\n'
     << "return rate         " << r.return_rate << '\n'
     << "return after catch  " << r.return_after_catch << '\n'
     << "target error (m)    " << r.target_error << '\n'
     << "outcomes:\n";
  for (const auto& [k, v] : r.terminal_histogram) os << "  " << std::left << std::setw(24) << k << v << '\n';
  return os.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

inline void write_eval_outputs(const fs::path& dir, const std::string& stem, const EvalReport& r,
                               const Json& extra = Json::object()) {
  fs::create_directories(dir);
  Json j = eval_report_json(r);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text(dir / (stem + ".json"), j.dump(2) + "\n");
  write_text(dir / (stem + ".txt"), eval_report_text(r));
}

/// Runs `body`, mapping library errors onto the documented exit codes.
template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(const CommandOptions& o) {
  std::ostream& log = *o.log;
  RunConfig cfg;
  try {
    cfg = resolve_config(o);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return guarded(log, [&] {
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    for (const char* stale : {"metrics.csv", "final.ckpt", "latest.ckpt", "stage1.ckpt", "stage2.ckpt", "stage3.ckpt"})
      fs::remove(dir / stale);
    const std::uint64_t hash = config_hash(cfg);
    Json manifest = {{"version", SPINRALLY_VERSION}, {"config_hash", hash}, {"status", "running"},
                     {"config", to_json(cfg)}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
    write_metrics_header(metrics);
    metrics.flush();

    int last_stage = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochMetrics& m, const PolicyParams& p, const RunningMoments& mo) {
      write_metrics_row(metrics, m);
      metrics.flush();
      save_checkpoint((dir / "latest.ckpt").string(), {hash, last_stage, m.epoch, p, mo});
      log << "epoch " << m.epoch << " stage " << m.stage << " reward " << std::setprecision(4) << m.mean_reward
          << " catch " << m.catch_rate << " return " << m.return_rate << " episodes " << m.episodes << '\n';
    };
    hooks.on_stage_end = [&](int stage, const PolicyParams& p, const RunningMoments& mo) {
      last_stage = stage;
      save_checkpoint((dir / ("stage" + std::to_string(stage) + ".ckpt")).string(), {hash, stage, -1, p, mo});
    };

    TrainResult res;
    try {
      res = run_curriculum(cfg.train, cfg.arena, hooks);
    } catch (const DivergedUpdate& e) {
      manifest["status"] = "diverged";
      manifest["error"] = e.what();
      write_text(dir / "manifest.json", manifest.dump(2) + "\n");
      log << "training diverged: " << e.what() << "; latest.ckpt holds the last good parameters\n";
      return static_cast<int>(kExitRuntime);
    }
    const int epochs = static_cast<int>(res.metrics.size());
    save_checkpoint((dir / "final.ckpt").string(), {hash, last_stage, epochs - 1, res.params, res.moments});
    // Stages with zero epochs still get a checkpoint of the inherited weights.
    for (int s = 1; s <= 3; ++s) {
      const fs::path p = dir / ("stage" + std::to_string(s) + ".ckpt");
      if (!fs::exists(p)) save_checkpoint(p.string(), {hash, s, -1, res.params, res.moments});
    }
    if (!fs::exists(dir / "latest.ckpt"))
      save_checkpoint((dir / "latest.ckpt").string(), {hash, last_stage, -1, res.params, res.moments});
    manifest["status"] = "complete";
    manifest["epochs"] = epochs;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// gen-seeds

inline int cmd_gen_seeds(const CommandOptions& o) {
  std::ostream& log = *o.log;
  return guarded(log, [&] {
    const RunConfig cfg = resolve_config(o);
    const std::size_t count = o.count.value_or(1000);
    const fs::path out = o.out.empty() ? fs::path(cfg.out) / "seeds.csv" : fs::path(o.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    WorkerPool pool(cfg.train.workers);
    GeneratorStats st;
    const auto seeds = generate_valid_seeds(count, cfg.arena.fallback_ranges, cfg.arena.rollout_settings(),
                                            mix_seed(cfg.seed, static_cast<std::uint64_t>(Stream::generator)),
                                            pool, &st);
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + out.string());
    write_seeds_csv(os, seeds);
    log << "wrote " << seeds.size() << " seeds to " << out.string() << " (valid rate " << st.valid_rate()
        << ")\n";
    if (seeds.size() < count) {
      log << "candidate budget exhausted before reaching " << count << " seeds\n";
      return static_cast<int>(kExitRuntime);
    }
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// eval

/// Policy from a checkpoint, or the freshly initialised network when none is given.
inline NetworkPolicy load_policy(const CommandOptions& o, const RunConfig& cfg, std::ostream& log) {
  if (o.checkpoint.empty()) {
    Rng init = make_rng(cfg.seed, Stream::init);
    return NetworkPolicy(PolicyParams::initialize(cfg.train.network, init, cfg.train.init_log_std),
                         RunningMoments(kObsDim));
  }
  Checkpoint c = load_checkpoint(o.checkpoint);
  if (c.config_hash != config_hash(cfg))
    log << "note: checkpoint was trained with a different configuration\n";
  return NetworkPolicy(std::move(c.params), std::move(c.moments));
}

inline std::vector<RallySeed> eval_seeds(const RunConfig& cfg, std::size_t n) {
  WorkerPool pool(cfg.train.workers);
  return generate_valid_seeds(n, cfg.arena.fallback_ranges, cfg.arena.rollout_settings(),
                              mix_seed(cfg.seed, static_cast<std::uint64_t>(Stream::eval)), pool);
}

inline std::optional<EvalReport> cmd_eval_report(const CommandOptions& o, int& code) {
  std::ostream& log = *o.log;
  std::optional<EvalReport> report;
  code = guarded(log, [&] {
    const RunConfig cfg = resolve_config(o);
    NetworkPolicy policy = load_policy(o, cfg, log);
    const auto seeds = eval_seeds(cfg, static_cast<std::size_t>(cfg.eval.episodes));
    report = evaluate(cfg.arena, StageIndex(cfg.eval.stage), seeds, policy, cfg.seed);
    std::cout << eval_report_text(*report);
    if (!o.out.empty())
      write_eval_outputs(o.out, "eval", *report, {{"checkpoint", o.checkpoint}, {"seed", cfg.seed}});
    return static_cast<int>(kExitOk);
  });
  return report;
}

inline int cmd_eval(const CommandOptions& o) {
  int code = 0;
  cmd_eval_report(o, code);
  return code;
}

// ---------------------------------------------------------------------------
// replay

inline int cmd_replay(const CommandOptions& o) {
  std::ostream& log = *o.log;
  return guarded(log, [&] {
    const RunConfig cfg = resolve_config(o);
    if (o.recordings.empty()) throw ConfigError("--recordings is required");
    if (!fs::is_directory(o.recordings)) throw std::runtime_error("not a directory: " + o.recordings);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(o.recordings))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    NetworkPolicy policy = load_policy(o, cfg, log);
    ReplayOptions ro;
    ro.window = cfg.replay.window;
    ro.filter = cfg.replay.filter;
    ro.spin = cfg.replay.spin;
    ro.fallback_aero = cfg.replay.fallback_aero;

    std::vector<EpisodeSummary> eps;
    Json per_file = Json::array();
    const std::uint64_t base = mix_seed(cfg.seed, static_cast<std::uint64_t>(Stream::replay));
    for (std::size_t i = 0; i < files.size(); ++i) {
      Json row = {{"file", files[i].filename().string()}};
      try {
        RallyEnv env(cfg.arena, mix_seed(base, i));
        env.set_stage(StageIndex(cfg.eval.stage));
        const ReplayReport r = replay(load_recorded(files[i].string()), env, policy, ro);
        eps.push_back(r.episode);
        row["caught"] = r.episode.caught;
        row["returned"] = r.episode.returned;
        row["landing_error"] = r.episode.landing_error;
        row["terminal"] = r.episode.returned ? "returned"
                          : r.episode.terminal ? std::string(to_string(*r.episode.terminal))
                                               : "unfinished";
        row["k_d"] = r.aero.k_d;
        row["k_m"] = r.aero.k_m;
        row["aero_fitted"] = r.aero_fitted;
      } catch (const InvalidInbound& e) {
        row["skipped"] = e.what();
      } catch (const ParseError& e) {
        row["skipped"] = e.what();
      } catch (const NonMonotonicTime& e) {
        row["skipped"] = e.what();
      } catch (const TooFewSamples& e) {
        row["skipped"] = e.what();
      } catch (const LeadingGap& e) {
        row["skipped"] = e.what();
      }
      if (row.contains("skipped")) log << files[i].filename().string() << ": skipped (" << row["skipped"].get<std::string>() << ")\n";
      per_file.push_back(row);
    }
    const EvalReport rep = summarize(eps);
    std::cout << eval_report_text(rep);
    const fs::path out = o.out.empty() ? fs::path(cfg.out) : fs::path(o.out);
    write_eval_outputs(out, "replay", rep, {{"recordings", per_file}});
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// report

inline std::vector<EpochMetrics> read_metrics_csv(std::istream& is) {
  std::vector<EpochMetrics> out;
  std::string line;
  if (!std::getline(is, line)) throw ParseError("metrics csv is empty");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        f.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("metrics line " + std::to_string(lineno) + ": bad number");
      }
    }
    if (f.size() != 16) throw ParseError("metrics line " + std::to_string(lineno) + ": expected 16 fields");
    EpochMetrics m;
    m.epoch = static_cast<int>(f[0]);
    m.stage = static_cast<int>(f[1]);
    m.mean_reward = f[2];
    m.episodes = static_cast<int>(f[3]);
    m.catch_rate = f[4];
    m.return_rate = f[5];
    m.return_after_catch = f[6];
    m.target_error = f[7];
    m.policy_loss = f[8];
    m.value_loss = f[9];
    m.entropy = f[10];
    m.approx_kl = f[11];
    m.clip_fraction = f[12];
    m.learning_rate = f[13];
    m.fallback_rate = f[14];
    m.generator_valid_rate = f[15];
    out.push_back(m);
  }
  return out;
}

/// Four stacked panels (reward, catch, return, target error) against epoch,
/// with dashed lines at stage changes.
inline std::string render_learning_curves_svg(const std::vector<EpochMetrics>& ms) {
  struct Panel {
    const char* title;
    double (*get)(const EpochMetrics&);
  };
  const Panel panels[] = {
      {"mean reward", [](const EpochMetrics& m) { return m.mean_reward; }},
      {"catch rate", [](const EpochMetrics& m) { return m.catch_rate; }},
      {"return rate", [](const EpochMetrics& m) { return m.return_rate; }},
      {"target error (m)", [](const EpochMetrics& m) { return m.target_error; }},
  };
  const double W = 720, H = 180, pad = 40;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H * 4
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double n = std::max<double>(1.0, static_cast<double>(ms.size()) - 1.0);
  for (int k = 0; k < 4; ++k) {
    const double top = k * H;
    double lo = 0.0, hi = 1e-9;
    for (const auto& m : ms) {
      lo = std::min(lo, panels[k].get(m));
      hi = std::max(hi, panels[k].get(m));
    }
    auto X = [&](double i) { return pad + (W - 2 * pad) * i / n; };
    auto Y = [&](double v) { return top + H - pad / 2 - (H - pad) * (v - lo) / (hi - lo); };
    os << "<text x=\"" << pad << "\" y=\"" << top + 14 << "\">" << panels[k].title << "</text>\n";
    os << "<text x=\"4\" y=\"" << Y(hi) + 4 << "\">" << std::setprecision(3) << hi << "</text>\n";
    os << "<text x=\"4\" y=\"" << Y(lo) << "\">" << lo << "</text>\n" << std::setprecision(2);
    os << "<rect x=\"" << pad << "\" y=\"" << Y(hi) << "\" width=\"" << W - 2 * pad << "\" height=\""
       << Y(lo) - Y(hi) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (std::size_t i = 1; i < ms.size(); ++i) {
      if (ms[i].stage != ms[i - 1].stage)
        os << "<line x1=\"" << X(i) << "\" x2=\"" << X(i) << "\" y1=\"" << Y(hi) << "\" y2=\"" << Y(lo)
           << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ms.size(); ++i) os << X(static_cast<double>(i)) << ',' << Y(panels[k].get(ms[i])) << ' ';
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Per-stage means over the last quarter of each stage.
inline std::string render_summary_table(const std::vector<EpochMetrics>& ms) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "| stage | epochs | mean reward | catch rate | return rate | return after catch | target error (m) |\n"
     << "|---|---|---|---|---|---|---|\n";
  for (int s = 1; s <= 3; ++s) {
    std::vector<const EpochMetrics*> v;
    for (const auto& m : ms)
      if (m.stage == s) v.push_back(&m);
    if (v.empty()) continue;
    const std::size_t from = v.size() - std::max<std::size_t>(1, v.size() / 4);
    double r = 0, c = 0, ret = 0, rac = 0, te = 0;
    const double k = static_cast<double>(v.size() - from);
    for (std::size_t i = from; i < v.size(); ++i) {
      r += v[i]->mean_reward / k;
      c += v[i]->catch_rate / k;
      ret += v[i]->return_rate / k;
      rac += v[i]->return_after_catch / k;
      te += v[i]->target_error / k;
    }
    os << "| " << s << " | " << v.size() << " | " << r << " | " << c << " | " << ret << " | " << rac << " | " << te
       << " |\n";
  }
  return os.str();
}

inline int cmd_report(const CommandOptions& o) {
  std::ostream& log = *o.log;
  return guarded(log, [&] {
    if (o.metrics.empty()) throw ConfigError("--metrics is required");
    std::ifstream is(o.metrics);
    if (!is) throw std::runtime_error("cannot open " + o.metrics);
    const auto ms = read_metrics_csv(is);
    const fs::path out = o.out.empty() ? fs::path(o.metrics).parent_path() : fs::path(o.out);
    if (!out.empty()) fs::create_directories(out);
    write_text(out / "learning_curves.svg", render_learning_curves_svg(ms));
    const std::string table = render_summary_table(ms);
    write_text(out / "summary.md", table);
    std::cout << table;
    return static_cast<int>(kExitOk);
  });
}

}  // namespace spinrally
