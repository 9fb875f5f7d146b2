#pragma once

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "spinrally/arena.hpp"
#include "spinrally/errors.hpp"
#include "spinrally/learner/curriculum.hpp"
#include "spinrally/real2sim.hpp"

namespace spinrally {

using Json = nlohmann::ordered_json;

struct EvalSettings {
  int episodes = 200;
  int stage = 3;
};

struct ReplaySettings {
  int window = 7;
  SmoothingFilter filter = SmoothingFilter::moving_average;
  Vec3 spin = Vec3::Zero();
  AeroCoefficients fallback_aero{0.1, 0.0};
};

/// Everything a run needs; presets are applied first, then file overrides.
struct RunConfig {
  std::string preset = "default7";
  std::uint64_t seed = 1;
  std::string out = "runs/latest";
  ArenaConfig arena;
  TrainConfig train;
  EvalSettings eval;
  ReplaySettings replay;

  void validate() const {
    try {
      arena.validate();
      train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (eval.episodes < 0) throw ConfigError("eval.episodes must be >= 0");
    if (eval.stage < 1 || eval.stage > 3) throw ConfigError("eval.stage must be 1, 2 or 3");
    if (replay.window < 3 || replay.window % 2 == 0) throw ConfigError("replay.window must be odd and >= 3");
  }
};

/// Full-size chain and network.
inline RunConfig preset_default7() {
  RunConfig c;
  c.preset = "default7";
  return c;
}

/// Desk-scale setup: 4-joint chain, small network, 64 + 192 environments.
inline RunConfig preset_desk4() {
  RunConfig c;
  c.preset = "desk4";
  c.arena.chain = ChainSpec::desk4();
  c.train.network.hidden = 64;
  c.train.stage_epochs = {150, 50, 50};
  c.train.train_envs = 64;
  c.train.generator_envs = 192;
  c.train.generator_warmup_steps = 400;
  c.train.generator_substeps = 36;
  c.train.learning_rate = 1e-3;
  c.train.ppo.minibatch_size = 1024;
  c.train.ppo.passes = 4;
  c.train.reward_scale = 0.1;
  return c;
}

inline RunConfig make_preset(const std::string& name) {
  if (name == "default7") return preset_default7();
  if (name == "desk4") return preset_desk4();
  throw ConfigError("unknown preset '" + name + "'");
}

namespace config_detail {

inline void only_keys(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + (path.empty() ? k : path + "." + k) + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + path + "." + key + "'");
  }
}

inline void read_vec(const Json& j, const char* key, Vec3& out, const std::string& path) {
  if (!j.contains(key)) return;
  std::array<double, 3> a{};
  read(j, key, a, path);
  out = {a[0], a[1], a[2]};
}

inline Json vec(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }
inline Json range(const Range& r) { return Json::array({r.lo, r.hi}); }

inline void read_range(const Json& j, const char* key, Range& out, const std::string& path) {
  if (!j.contains(key)) return;
  std::array<double, 2> a{};
  read(j, key, a, path);
  if (a[0] > a[1]) throw ConfigError(path + "." + key + ": lower bound above upper bound");
  out = {a[0], a[1]};
}

inline void read_range3(const Json& j, const char* key, std::array<Range, 3>& out, const std::string& path) {
  if (!j.contains(key)) return;
  std::array<std::array<double, 2>, 3> a{};
  read(j, key, a, path);
  for (int i = 0; i < 3; ++i) {
    if (a[i][0] > a[i][1]) throw ConfigError(path + "." + key + ": lower bound above upper bound");
    out[i] = {a[i][0], a[i][1]};
  }
}

inline Json contact_json(const ContactParams& c) {
  return {{"restitution", c.restitution}, {"sliding_friction", c.sliding_friction},
          {"rolling_friction", c.rolling_friction}};
}

inline void contact_read(const Json& j, ContactParams& c, const std::string& p) {
  only_keys(j, p, {"restitution", "sliding_friction", "rolling_friction"});
  read(j, "restitution", c.restitution, p);
  read(j, "sliding_friction", c.sliding_friction, p);
  read(j, "rolling_friction", c.rolling_friction, p);
}

inline Json joint_json(const JointSpec& s) {
  return {{"type", s.type == JointType::prismatic ? "prismatic" : "revolute"},
          {"axis", vec(s.axis)},
          {"origin", vec(s.origin)},
          {"rpy", vec(s.rpy)},
          {"q_min", s.q_min},
          {"q_max", s.q_max},
          {"qd_max", s.qd_max},
          {"tau_max", s.tau_max},
          {"kp", s.kp},
          {"kd", s.kd},
          {"inertia", s.inertia}};
}

inline JointSpec joint_read(const Json& j, const std::string& p) {
  only_keys(j, p, {"type", "axis", "origin", "rpy", "q_min", "q_max", "qd_max", "tau_max", "kp", "kd", "inertia"});
  std::string type = "revolute";
  read(j, "type", type, p);
  JointSpec s;
  if (type == "prismatic") {
    s = ChainSpec::prismatic(Vec3::UnitZ(), -1.0, 1.0);
  } else if (type == "revolute") {
    s = ChainSpec::revolute(Vec3::UnitZ(), -1.0, 1.0);
  } else {
    throw ConfigError(p + ".type: expected 'prismatic' or 'revolute'");
  }
  read_vec(j, "axis", s.axis, p);
  read_vec(j, "origin", s.origin, p);
  read_vec(j, "rpy", s.rpy, p);
  read(j, "q_min", s.q_min, p);
  read(j, "q_max", s.q_max, p);
  read(j, "qd_max", s.qd_max, p);
  read(j, "tau_max", s.tau_max, p);
  read(j, "kp", s.kp, p);
  read(j, "kd", s.kd, p);
  read(j, "inertia", s.inertia, p);
  return s;
}

}  // namespace config_detail

inline Json to_json(const RunConfig& c) {
  using namespace config_detail;
  const ArenaConfig& a = c.arena;
  const TrainConfig& t = c.train;
  const RewardConstants& r = a.reward;
  Json joints = Json::array();
  for (const auto& j : a.chain.joints) joints.push_back(joint_json(j));
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"out", c.out},
      {"table",
       {{"length", a.table.length}, {"width", a.table.width}, {"height", a.table.height},
        {"net_height", a.table.net_height}, {"net_overhang", a.table.net_overhang}, {"bounds", a.table.bounds}}},
      {"ball", {{"mass", a.ball.mass}, {"radius", a.ball.radius}, {"inertia", a.ball.inertia}}},
      {"flight", {{"gravity", vec(a.flight.gravity)}, {"max_spin", a.flight.max_spin}, {"spin_decay", a.flight.spin_decay}}},
      {"contact", {{"table", contact_json(a.table_contact)}, {"racket", contact_json(a.racket_contact)}}},
      {"chain",
       {{"base_position", vec(a.chain.base_position)}, {"base_rpy", vec(a.chain.base_rpy)},
        {"racket_offset", vec(a.chain.racket_offset)}, {"racket_rpy", vec(a.chain.racket_rpy)},
        {"racket_radius", a.chain.racket_radius}, {"link_radius", a.chain.link_radius}, {"joints", joints}}},
      {"noise",
       {{"sigma_ball_pos", a.noise.sigma_ball_pos}, {"sigma_ball_vel", a.noise.sigma_ball_vel},
        {"delay_min", a.noise.delay_min}, {"delay_max", a.noise.delay_max}, {"dropout_prob", a.noise.dropout_prob}}},
      {"timing", {{"control_dt", a.control_dt}, {"substeps", a.substeps}, {"time_limit", a.time_limit}}},
      {"target_inset", a.target_inset},
      {"seed_ranges",
       {{"p", Json::array({range(a.fallback_ranges.p[0]), range(a.fallback_ranges.p[1]), range(a.fallback_ranges.p[2])})},
        {"v", Json::array({range(a.fallback_ranges.v[0]), range(a.fallback_ranges.v[1]), range(a.fallback_ranges.v[2])})},
        {"w", Json::array({range(a.fallback_ranges.w[0]), range(a.fallback_ranges.w[1]), range(a.fallback_ranges.w[2])})},
        {"k_d", range(a.fallback_ranges.k_d)},
        {"k_m", range(a.fallback_ranges.k_m)}}},
      {"reward",
       {{"a21", r.a21}, {"a22", r.a22}, {"a23", r.a23}, {"a31", r.a31}, {"a32", r.a32}, {"a33", r.a33},
        {"a41", r.a41}, {"a42", r.a42}, {"a43", r.a43}, {"a51", r.a51}, {"a52", r.a52}, {"a53", r.a53},
        {"a63", r.a63}, {"a73", r.a73}, {"b73", r.b73}, {"c", r.c}, {"d", r.d}, {"e", r.e},
        {"racket_velocity_clip", r.racket_velocity_clip}}},
      {"train",
       {{"stage_epochs", t.stage_epochs},
        {"horizon", t.horizon},
        {"gamma", t.gamma},
        {"lambda", t.lambda},
        {"learning_rate", t.learning_rate},
        {"final_lr_fraction", t.final_lr_fraction},
        {"reward_scale", t.reward_scale},
        {"init_log_std", t.init_log_std},
        {"moment_reset_count", t.moment_reset_count},
        {"train_envs", t.train_envs},
        {"generator_envs", t.generator_envs},
        {"generator_warmup_steps", t.generator_warmup_steps},
        {"generator_substeps", t.generator_substeps},
        {"workers", t.workers},
        {"network", {{"hidden", t.network.hidden}, {"layers", t.network.layers}}},
        {"ppo",
         {{"clip", t.ppo.clip}, {"value_coef", t.ppo.value_coef}, {"entropy_coef", t.ppo.entropy_coef},
          {"max_grad_norm", t.ppo.max_grad_norm}, {"passes", t.ppo.passes},
          {"minibatch_size", t.ppo.minibatch_size}, {"normalize_advantages", t.ppo.normalize_advantages}}}}},
      {"eval", {{"episodes", c.eval.episodes}, {"stage", c.eval.stage}}},
      {"replay",
       {{"window", c.replay.window},
        {"filter", c.replay.filter == SmoothingFilter::moving_average ? "moving_average" : "savitzky_golay"},
        {"spin", vec(c.replay.spin)},
        {"fallback_aero", Json::array({c.replay.fallback_aero.k_d, c.replay.fallback_aero.k_m})}}},
  };
}

/// Applies `j` on top of its preset. Unknown keys and ill-typed values are
/// rejected with the offending path.
inline RunConfig parse_config(const Json& j) {
  using namespace config_detail;
  only_keys(j, "", {"preset", "seed", "out", "table", "ball", "flight", "contact", "chain", "noise", "timing",
                    "target_inset", "seed_ranges", "reward", "train", "eval", "replay"});
  std::string preset = "default7";
  read(j, "preset", preset, "");
  RunConfig c = make_preset(preset);
  read(j, "seed", c.seed, "");
  read(j, "out", c.out, "");
  ArenaConfig& a = c.arena;
  if (j.contains("table")) {
    const Json& s = j["table"];
    only_keys(s, "table", {"length", "width", "height", "net_height", "net_overhang", "bounds"});
    read(s, "length", a.table.length, "table");
    read(s, "width", a.table.width, "table");
    read(s, "height", a.table.height, "table");
    read(s, "net_height", a.table.net_height, "table");
    read(s, "net_overhang", a.table.net_overhang, "table");
    read(s, "bounds", a.table.bounds, "table");
  }
  if (j.contains("ball")) {
    const Json& s = j["ball"];
    only_keys(s, "ball", {"mass", "radius", "inertia"});
    read(s, "mass", a.ball.mass, "ball");
    read(s, "radius", a.ball.radius, "ball");
    read(s, "inertia", a.ball.inertia, "ball");
  }
  if (j.contains("flight")) {
    const Json& s = j["flight"];
    only_keys(s, "flight", {"gravity", "max_spin", "spin_decay"});
    read_vec(s, "gravity", a.flight.gravity, "flight");
    read(s, "max_spin", a.flight.max_spin, "flight");
    read(s, "spin_decay", a.flight.spin_decay, "flight");
  }
  if (j.contains("contact")) {
    const Json& s = j["contact"];
    only_keys(s, "contact", {"table", "racket"});
    if (s.contains("table")) contact_read(s["table"], a.table_contact, "contact.table");
    if (s.contains("racket")) contact_read(s["racket"], a.racket_contact, "contact.racket");
  }
  if (j.contains("chain")) {
    const Json& s = j["chain"];
    only_keys(s, "chain", {"base_position", "base_rpy", "racket_offset", "racket_rpy", "racket_radius", "link_radius", "joints"});
    read_vec(s, "base_position", a.chain.base_position, "chain");
    read_vec(s, "base_rpy", a.chain.base_rpy, "chain");
    read_vec(s, "racket_offset", a.chain.racket_offset, "chain");
    read_vec(s, "racket_rpy", a.chain.racket_rpy, "chain");
    read(s, "racket_radius", a.chain.racket_radius, "chain");
    read(s, "link_radius", a.chain.link_radius, "chain");
    if (s.contains("joints")) {
      if (!s["joints"].is_array()) throw ConfigError("chain.joints: expected an array");
      a.chain.joints.clear();
      int i = 0;
      for (const auto& jj : s["joints"]) a.chain.joints.push_back(joint_read(jj, "chain.joints[" + std::to_string(i++) + "]"));
    }
  }
  if (j.contains("noise")) {
    const Json& s = j["noise"];
    only_keys(s, "noise", {"sigma_ball_pos", "sigma_ball_vel", "delay_min", "delay_max", "dropout_prob"});
    read(s, "sigma_ball_pos", a.noise.sigma_ball_pos, "noise");
    read(s, "sigma_ball_vel", a.noise.sigma_ball_vel, "noise");
    read(s, "delay_min", a.noise.delay_min, "noise");
    read(s, "delay_max", a.noise.delay_max, "noise");
    read(s, "dropout_prob", a.noise.dropout_prob, "noise");
  }
  if (j.contains("timing")) {
    const Json& s = j["timing"];
    only_keys(s, "timing", {"control_dt", "substeps", "time_limit"});
    read(s, "control_dt", a.control_dt, "timing");
    read(s, "substeps", a.substeps, "timing");
    read(s, "time_limit", a.time_limit, "timing");
  }
  read(j, "target_inset", a.target_inset, "");
  if (j.contains("seed_ranges")) {
    const Json& s = j["seed_ranges"];
    only_keys(s, "seed_ranges", {"p", "v", "w", "k_d", "k_m"});
    read_range3(s, "p", a.fallback_ranges.p, "seed_ranges");
    read_range3(s, "v", a.fallback_ranges.v, "seed_ranges");
    read_range3(s, "w", a.fallback_ranges.w, "seed_ranges");
    read_range(s, "k_d", a.fallback_ranges.k_d, "seed_ranges");
    read_range(s, "k_m", a.fallback_ranges.k_m, "seed_ranges");
  }
  if (j.contains("reward")) {
    const Json& s = j["reward"];
    RewardConstants& r = a.reward;
    only_keys(s, "reward", {"a21", "a22", "a23", "a31", "a32", "a33", "a41", "a42", "a43", "a51", "a52", "a53",
                            "a63", "a73", "b73", "c", "d", "e", "racket_velocity_clip"});
    for (auto [k, f] : std::initializer_list<std::pair<const char*, double*>>{
             {"a21", &r.a21}, {"a22", &r.a22}, {"a23", &r.a23}, {"a31", &r.a31}, {"a32", &r.a32},
             {"a33", &r.a33}, {"a41", &r.a41}, {"a42", &r.a42}, {"a43", &r.a43}, {"a51", &r.a51},
             {"a52", &r.a52}, {"a53", &r.a53}, {"a63", &r.a63}, {"a73", &r.a73}, {"b73", &r.b73},
             {"c", &r.c}, {"d", &r.d}, {"e", &r.e}, {"racket_velocity_clip", &r.racket_velocity_clip}})
      read(s, k, *f, "reward");
  }
  if (j.contains("train")) {
    const Json& s = j["train"];
    TrainConfig& t = c.train;
    only_keys(s, "train", {"stage_epochs", "horizon", "gamma", "lambda", "learning_rate", "final_lr_fraction",
                           "reward_scale", "init_log_std", "moment_reset_count", "train_envs", "generator_envs",
                           "generator_warmup_steps", "generator_substeps", "workers", "network", "ppo"});
    read(s, "stage_epochs", t.stage_epochs, "train");
    read(s, "horizon", t.horizon, "train");
    read(s, "gamma", t.gamma, "train");
    read(s, "lambda", t.lambda, "train");
    read(s, "learning_rate", t.learning_rate, "train");
    read(s, "final_lr_fraction", t.final_lr_fraction, "train");
    read(s, "reward_scale", t.reward_scale, "train");
    read(s, "init_log_std", t.init_log_std, "train");
    read(s, "moment_reset_count", t.moment_reset_count, "train");
    read(s, "train_envs", t.train_envs, "train");
    read(s, "generator_envs", t.generator_envs, "train");
    read(s, "generator_warmup_steps", t.generator_warmup_steps, "train");
    read(s, "generator_substeps", t.generator_substeps, "train");
    read(s, "workers", t.workers, "train");
    if (s.contains("network")) {
      const Json& n = s["network"];
      only_keys(n, "train.network", {"hidden", "layers"});
      read(n, "hidden", t.network.hidden, "train.network");
      read(n, "layers", t.network.layers, "train.network");
    }
    if (s.contains("ppo")) {
      const Json& n = s["ppo"];
      only_keys(n, "train.ppo", {"clip", "value_coef", "entropy_coef", "max_grad_norm", "passes", "minibatch_size",
                                 "normalize_advantages"});
      read(n, "clip", t.ppo.clip, "train.ppo");
      read(n, "value_coef", t.ppo.value_coef, "train.ppo");
      read(n, "entropy_coef", t.ppo.entropy_coef, "train.ppo");
      read(n, "max_grad_norm", t.ppo.max_grad_norm, "train.ppo");
      read(n, "passes", t.ppo.passes, "train.ppo");
      read(n, "minibatch_size", t.ppo.minibatch_size, "train.ppo");
      read(n, "normalize_advantages", t.ppo.normalize_advantages, "train.ppo");
    }
  }
  if (j.contains("eval")) {
    const Json& s = j["eval"];
    only_keys(s, "eval", {"episodes", "stage"});
    read(s, "episodes", c.eval.episodes, "eval");
    read(s, "stage", c.eval.stage, "eval");
  }
  if (j.contains("replay")) {
    const Json& s = j["replay"];
    only_keys(s, "replay", {"window", "filter", "spin", "fallback_aero"});
    read(s, "window", c.replay.window, "replay");
    std::string filter;
    read(s, "filter", filter, "replay");
    if (filter == "moving_average") c.replay.filter = SmoothingFilter::moving_average;
    else if (filter == "savitzky_golay") c.replay.filter = SmoothingFilter::savitzky_golay;
    else if (!filter.empty()) throw ConfigError("replay.filter: expected 'moving_average' or 'savitzky_golay'");
    read_vec(s, "spin", c.replay.spin, "replay");
    if (s.contains("fallback_aero")) {
      std::array<double, 2> fa{};
      read(s, "fallback_aero", fa, "replay");
      c.replay.fallback_aero = {fa[0], fa[1]};
    }
  }
  c.validate();
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

/// FNV-1a over the canonical JSON dump.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace spinrally
