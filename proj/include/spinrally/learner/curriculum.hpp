#pragma once

#include <array>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "spinrally/arena.hpp"
#include "spinrally/learner/gae.hpp"
#include "spinrally/learner/moments.hpp"
#include "spinrally/learner/network.hpp"
#include "spinrally/learner/ppo.hpp"
#include "spinrally/parallel.hpp"
#include "spinrally/seedgen.hpp"

namespace spinrally {

struct TrainConfig {
  std::array<int, 3> stage_epochs{100, 100, 100};
  int horizon = 64;
  double gamma = 0.99;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  double final_lr_fraction = 0.0;  // stage 3 decays linearly towards lr * this
  PpoConfig ppo;
  double reward_scale = 1.0;       // applied to rewards before GAE only
  NetworkShape network;
  double init_log_std = -0.5;
  double moment_reset_count = 1e4;
  int train_envs = 64;
  int generator_envs = 192;
  int generator_warmup_steps = 0;  // control periods of generator-only stepping before training
  int generator_substeps = 0;       // physics steps per generator env per control period; 0 = lock-step
  unsigned workers = 1;
  std::uint64_t seed = 1;

  void validate() const {
    for (int e : stage_epochs)
      if (e < 0) throw std::invalid_argument("stage epochs must be >= 0");
    if (horizon < 1 || train_envs < 1 || generator_envs < 0 || generator_warmup_steps < 0 ||
        generator_substeps < 0)
      throw std::invalid_argument("horizon and env counts must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0) || !(lambda > 0.0 && lambda <= 1.0))
      throw std::invalid_argument("gamma and lambda must lie in (0, 1]");
    if (learning_rate <= 0.0 || final_lr_fraction < 0.0 || reward_scale <= 0.0)
      throw std::invalid_argument("learning rate and reward scale must be positive");
    if (ppo.clip <= 0.0 || ppo.passes < 1 || ppo.minibatch_size < 1 || ppo.value_coef < 0.0 ||
        ppo.entropy_coef < 0.0 || ppo.max_grad_norm < 0.0)
      throw std::invalid_argument("invalid PPO settings");
    if (moment_reset_count < 1.0) throw std::invalid_argument("moment reset count must be >= 1");
    if (network.obs_dim != kObsDim || network.act_dim != kActionDim)
      throw std::invalid_argument("network must map 37 observations to 7 actions");
  }
};

struct EpochMetrics {
  int epoch = 0;  // global, 0-based
  int stage = 1;
  double mean_reward = 0.0;  // per control step
  int episodes = 0;          // completed during the epoch
  double catch_rate = 0.0;
  double return_rate = 0.0;
  double return_after_catch = 0.0;
  double target_error = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double learning_rate = 0.0;
  double fallback_rate = 0.0;   // episodes started without a buffered seed
  double generator_valid_rate = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

inline void write_metrics_header(std::ostream& os) {
  os << "epoch,stage,mean_reward,episodes,catch_rate,return_rate,return_after_catch,target_error,"
        "policy_loss,value_loss,entropy,approx_kl,clip_fraction,learning_rate,fallback_rate,"
        "generator_valid_rate\n";
}

inline void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  const auto prec = os.precision(17);
  os << m.epoch << ',' << m.stage << ',' << m.mean_reward << ',' << m.episodes << ','
     << m.catch_rate << ',' << m.return_rate << ',' << m.return_after_catch << ','
     << m.target_error << ',' << m.policy_loss << ',' << m.value_loss << ',' << m.entropy << ','
     << m.approx_kl << ',' << m.clip_fraction << ',' << m.learning_rate << ',' << m.fallback_rate
     << ',' << m.generator_valid_rate << '\n';
  os.precision(prec);
}

struct TrainHooks {
  std::function<void(const EpochMetrics&, const PolicyParams&, const RunningMoments&)> on_epoch;
  std::function<void(int stage, const PolicyParams&, const RunningMoments&)> on_stage_end;
};

struct TrainResult {
  PolicyParams params;
  RunningMoments moments;
  std::vector<EpochMetrics> metrics;
};

/// Learning rate for epoch `k` of a stage with `total` epochs: constant, except
/// in stage 3 where it falls linearly towards lr * final_lr_fraction.
inline double scheduled_lr(const TrainConfig& cfg, int stage, int k, int total) {
  if (stage != 3 || total <= 1) return cfg.learning_rate;
  const double f = static_cast<double>(k) / static_cast<double>(total - 1);
  return cfg.learning_rate * (1.0 - f * (1.0 - cfg.final_lr_fraction));
}

/// Owns the training batch, the lock-step generator bank and the learner state.
/// Stochastic draws happen serially in environment order, so a fixed seed
/// yields the same metrics for any worker count.
class CurriculumTrainer {
 public:
  CurriculumTrainer(TrainConfig cfg, ArenaConfig arena)
      : cfg_(std::move(cfg)),
        arena_(std::move(arena)),
        pool_(cfg_.workers),
        buffer_(static_cast<std::size_t>(cfg_.train_envs)),
        bank_(static_cast<std::size_t>(cfg_.generator_envs), arena_.fallback_ranges,
              arena_.rollout_settings(), cfg_.seed),
        policy_rng_(make_rng(cfg_.seed, Stream::policy)),
        moments_(kObsDim) {
    cfg_.validate();
    arena_.validate();
    Rng init = make_rng(cfg_.seed, Stream::init);
    params_ = PolicyParams::initialize(cfg_.network, init, cfg_.init_log_std);
    adam_ = Adam(params_.size());
    for (int i = 0; i < cfg_.train_envs; ++i)
      envs_.emplace_back(arena_, mix_seed(mix_seed(cfg_.seed, static_cast<std::uint64_t>(Stream::train_env)),
                                          static_cast<std::uint64_t>(i)));
  }

  const PolicyParams& params() const { return params_; }
  const RunningMoments& moments() const { return moments_; }
  const GeneratorStats& generator_stats() const { return bank_.stats(); }
  void set_params(PolicyParams p) {
    if (!(p.shape() == params_.shape())) throw std::invalid_argument("network shape mismatch");
    params_ = std::move(p);
  }
  void set_moments(RunningMoments m) { moments_ = std::move(m); }

  TrainResult run(const TrainHooks& hooks = {}) {
    TrainResult out;
    bool started = false;
    for (int s = 1; s <= 3; ++s) {
      const int total = cfg_.stage_epochs[s - 1];
      if (total == 0) continue;
      const StageIndex stage(s);
      for (auto& e : envs_) e.set_stage(stage);
      moments_ = reset_moment_count(moments_, cfg_.moment_reset_count);
      if (!started) {
        start();
        started = true;
      }
      for (int k = 0; k < total; ++k) {
        EpochMetrics m = run_epoch(s, scheduled_lr(cfg_, s, k, total));
        m.epoch = static_cast<int>(out.metrics.size());
        out.metrics.push_back(m);
        if (hooks.on_epoch) hooks.on_epoch(m, params_, moments_);
      }
      if (hooks.on_stage_end) hooks.on_stage_end(s, params_, moments_);
    }
    out.params = params_;
    out.moments = moments_;
    return out;
  }

 private:
  void generator_tick() {
    if (bank_.size() > 0)
      bank_.step(cfg_.generator_substeps > 0 ? cfg_.generator_substeps : arena_.substeps, buffer_, &pool_);
  }

  void start() {
    for (int k = 0; k < cfg_.generator_warmup_steps && !buffer_.full(); ++k) generator_tick();
    obs_.resize(envs_.size());
    for (std::size_t i = 0; i < envs_.size(); ++i) {
      generator_tick();
      obs_[i] = envs_[i].reset(buffer_);
    }
  }

  Eigen::MatrixXd observe_and_normalize() {
    Eigen::MatrixXd raw(kObsDim, static_cast<Eigen::Index>(envs_.size()));
    for (std::size_t i = 0; i < envs_.size(); ++i) {
      raw.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(obs_[i].data(), kObsDim);
      moments_ = update_moments(moments_, obs_[i]);
    }
    return normalize_columns(raw, moments_);
  }

  EpochMetrics run_epoch(int stage, double lr) {
    const int n = static_cast<int>(envs_.size());
    const int h = cfg_.horizon;
    const Eigen::Index total = static_cast<Eigen::Index>(n) * h;

    PpoBatch batch;
    batch.obs.resize(kObsDim, total);
    batch.actions.resize(kActionDim, total);
    batch.log_probs.resize(total);
    std::vector<double> rewards(static_cast<std::size_t>(total));
    std::vector<double> values(static_cast<std::size_t>(total));
    std::vector<std::uint8_t> dones(static_cast<std::size_t>(total));

    EpochMetrics m;
    m.stage = stage;
    m.learning_rate = lr;
    double reward_sum = 0.0;
    int caught = 0, returned = 0, fallbacks = 0;
    double err_sum = 0.0;
    const GeneratorStats gen_before = bank_.stats();

    std::vector<std::array<double, kActionDim>> act(envs_.size());
    std::vector<StepResult> results(envs_.size());
    for (int t = 0; t < h; ++t) {
      generator_tick();
      const Eigen::MatrixXd x = observe_and_normalize();
      const ForwardCache c = forward(params_, x);
      for (int i = 0; i < n; ++i) {
        const Eigen::Index col = static_cast<Eigen::Index>(t) * n + i;
        const RawSample s = sample_action_raw(c.mean.col(i), c.std, policy_rng_);
        batch.obs.col(col) = x.col(i);
        batch.actions.col(col) = s.raw;
        batch.log_probs[col] = s.sample.log_prob;
        values[static_cast<std::size_t>(col)] = c.value[i];
        for (int j = 0; j < kActionDim; ++j) act[i][j] = s.sample.action[j];
      }
      pool_.parallel_for(envs_.size(), [&](std::size_t i) { results[i] = envs_[i].step(act[i]); });
      for (int i = 0; i < n; ++i) {
        const auto col = static_cast<std::size_t>(t) * n + i;
        rewards[col] = results[i].reward * cfg_.reward_scale;
        dones[col] = results[i].done ? 1 : 0;
        reward_sum += results[i].reward;
        obs_[i] = results[i].obs;
        if (results[i].done) {
          const EpisodeSummary& ep = envs_[i].episode();
          ++m.episodes;
          caught += ep.caught ? 1 : 0;
          returned += ep.returned ? 1 : 0;
          fallbacks += ep.random_fallback ? 1 : 0;
          if (ep.returned) err_sum += ep.landing_error;
          obs_[i] = envs_[i].reset(buffer_);
        }
      }
    }

    // Bootstrap from the post-horizon observation without updating statistics.
    Eigen::MatrixXd last(kObsDim, n);
    for (int i = 0; i < n; ++i) last.col(i) = Eigen::Map<const Eigen::VectorXd>(obs_[i].data(), kObsDim);
    const ForwardCache boot = forward(params_, normalize_columns(last, moments_));

    batch.advantages.resize(total);
    batch.returns.resize(total);
    std::vector<double> r(h), v(h);
    std::vector<std::uint8_t> d(h);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < h; ++t) {
        const auto col = static_cast<std::size_t>(t) * n + i;
        r[t] = rewards[col];
        v[t] = values[col];
        d[t] = dones[col];
      }
      const GaeResult g = compute_gae(r, v, d, boot.value[i], cfg_.gamma, cfg_.lambda);
      for (int t = 0; t < h; ++t) {
        const Eigen::Index col = static_cast<Eigen::Index>(t) * n + i;
        batch.advantages[col] = g.advantages[t];
        batch.returns[col] = g.returns[t];
      }
    }

    const UpdateStats us = ppo_update(params_, adam_, std::move(batch), cfg_.ppo, lr, policy_rng_);

    m.mean_reward = reward_sum / static_cast<double>(total);
    if (m.episodes > 0) {
      m.catch_rate = static_cast<double>(caught) / m.episodes;
      m.return_rate = static_cast<double>(returned) / m.episodes;
      m.fallback_rate = static_cast<double>(fallbacks) / m.episodes;
    }
    if (caught > 0) m.return_after_catch = static_cast<double>(returned) / caught;
    if (returned > 0) m.target_error = err_sum / returned;
    m.policy_loss = us.policy_loss;
    m.value_loss = us.value_loss;
    m.entropy = us.entropy;
    m.approx_kl = us.approx_kl;
    m.clip_fraction = us.clip_fraction;
    const GeneratorStats& g = bank_.stats();
    const auto tried = g.tried - gen_before.tried;
    m.generator_valid_rate = tried ? static_cast<double>(g.valid - gen_before.valid) / tried : 0.0;
    return m;
  }

  TrainConfig cfg_;
  ArenaConfig arena_;
  WorkerPool pool_;
  SeedBuffer buffer_;
  GeneratorBank bank_;
  Rng policy_rng_;
  RunningMoments moments_;
  PolicyParams params_;
  Adam adam_;
  std::vector<RallyEnv> envs_;
  std::vector<Observation> obs_;
};

/// Three-stage schedule with weight inheritance; stages with zero epochs are
/// skipped, so {0, 0, E3} trains on the final reward only.
inline TrainResult run_curriculum(const TrainConfig& cfg, const ArenaConfig& arena,
                                  const TrainHooks& hooks = {}) {
  CurriculumTrainer trainer(cfg, arena);
  return trainer.run(hooks);
}

}  // namespace spinrally
