#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spinrally/arena.hpp"
#include "spinrally/learner/moments.hpp"
#include "spinrally/learner/network.hpp"

namespace spinrally {

using Action = std::array<double, kActionDim>;

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const Observation& obs) = 0;
};

/// Deterministic network policy: the tanh-bounded mean for the normalized
/// observation. Stateless, so one instance may serve many episodes.
class NetworkPolicy final : public Policy {
 public:
  NetworkPolicy(PolicyParams params, RunningMoments moments)
      : params_(std::move(params)), moments_(std::move(moments)) {}

  Action act(const Observation& obs) override {
    const Eigen::Map<const Eigen::VectorXd> x(obs.data(), kObsDim);
    const ForwardCache c = forward(params_, normalize(x, moments_));
    Action a{};
    for (int i = 0; i < kActionDim; ++i) a[i] = c.mean(i, 0);
    return a;
  }

 private:
  PolicyParams params_;
  RunningMoments moments_;
};

/// Holds a fixed action.
class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(Action a) : a_(a) {}
  Action act(const Observation&) override { return a_; }

 private:
  Action a_;
};

/// Uniform random actions from its own stream.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  Action act(const Observation&) override {
    Action a{};
    for (double& x : a) x = uniform(rng_, -1.0, 1.0);
    return a;
  }

 private:
  Rng rng_;
};

struct EvalReport {
  int episodes = 0;
  double catch_rate = 0.0;
  double return_rate = 0.0;
  double return_after_catch = 0.0;
  double target_error = 0.0;  // m, over episodes reaching T3
  std::map<std::string, int> terminal_histogram;

  bool operator==(const EvalReport&) const = default;
};

/// Folds per-episode summaries into the report rates.
inline EvalReport summarize(const std::vector<EpisodeSummary>& eps) {
  EvalReport r;
  r.episodes = static_cast<int>(eps.size());
  int caught = 0, returned = 0;
  double err = 0.0;
  for (const auto& e : eps) {
    caught += e.caught ? 1 : 0;
    if (e.returned) {
      ++returned;
      err += e.landing_error;
    }
    const std::string key = e.returned ? "returned" : e.terminal ? std::string(to_string(*e.terminal)) : "unfinished";
    r.terminal_histogram[key] += 1;
  }
  if (r.episodes > 0) {
    r.catch_rate = static_cast<double>(caught) / r.episodes;
    r.return_rate = static_cast<double>(returned) / r.episodes;
  }
  if (caught > 0) r.return_after_catch = static_cast<double>(returned) / caught;
  if (returned > 0) r.target_error = err / returned;
  return r;
}

/// Runs one episode to completion from the given seed.
inline EpisodeSummary run_episode(RallyEnv& env, Policy& policy, const std::optional<RallySeed>& seed) {
  Observation obs = env.reset(seed);
  while (!env.done()) obs = env.step(policy.act(obs)).obs;
  return env.episode();
}

/// Deterministic evaluation: episode i uses its own environment stream and
/// seeds[i] as the inbound ball.
inline EvalReport evaluate(const ArenaConfig& cfg, StageIndex stage, const std::vector<RallySeed>& seeds,
                           Policy& policy, std::uint64_t run_seed,
                           std::vector<EpisodeSummary>* episodes = nullptr) {
  std::vector<EpisodeSummary> eps;
  eps.reserve(seeds.size());
  const std::uint64_t base = mix_seed(run_seed, static_cast<std::uint64_t>(Stream::eval));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    RallyEnv env(cfg, mix_seed(base, i));
    env.set_stage(stage);
    eps.push_back(run_episode(env, policy, seeds[i]));
  }
  EvalReport r = summarize(eps);
  if (episodes) *episodes = std::move(eps);
  return r;
}

}  // namespace spinrally
