#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "spinrally/errors.hpp"
#include "spinrally/learner/network.hpp"
#include "spinrally/rng.hpp"

namespace spinrally {

inline double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::VectorXd>& log_std,
                                const Eigen::Ref<const Eigen::VectorXd>& action) {
  const Eigen::ArrayXd z = (action - mean).array() / log_std.array().exp();
  return -0.5 * z.square().sum() - log_std.sum() -
         0.5 * static_cast<double>(mean.size()) * std::log(2.0 * std::numbers::pi);
}

struct SampledAction {
  Eigen::VectorXd action;  // clamped to [-1, 1]
  double log_prob = 0.0;   // of the unclamped draw
};

/// Gaussian draw clamped to the action box; the log-probability refers to the
/// raw draw, and PPO later re-evaluates it on that raw value.
struct RawSample {
  Eigen::VectorXd raw;
  SampledAction sample;
};

inline RawSample sample_action_raw(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                   const Eigen::Ref<const Eigen::VectorXd>& std, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  RawSample out;
  out.raw.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) out.raw[i] = mean[i] + std[i] * n01(rng);
  out.sample.action = out.raw.cwiseMax(-1.0).cwiseMin(1.0);
  out.sample.log_prob = gaussian_log_prob(mean, std.array().log().matrix(), out.raw);
  return out;
}

inline SampledAction sample_action(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                   const Eigen::Ref<const Eigen::VectorXd>& std, Rng& rng) {
  return sample_action_raw(mean, std, rng).sample;
}

struct PpoConfig {
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.003;
  double max_grad_norm = 1.0;
  int passes = 4;           // sweeps over the dataset per update
  int minibatch_size = 256;
  bool normalize_advantages = true;
};

/// Rollout data, one column per transition; observations already normalized.
struct PpoBatch {
  Eigen::MatrixXd obs;         // obs_dim x D
  Eigen::MatrixXd actions;     // act_dim x D, raw (unclamped) draws
  Eigen::VectorXd log_probs;   // D
  Eigen::VectorXd advantages;  // D
  Eigen::VectorXd returns;     // D

  Eigen::Index size() const { return obs.cols(); }

  PpoBatch select(std::span<const Eigen::Index> idx) const {
    PpoBatch b;
    const auto n = static_cast<Eigen::Index>(idx.size());
    b.obs.resize(obs.rows(), n);
    b.actions.resize(actions.rows(), n);
    b.log_probs.resize(n);
    b.advantages.resize(n);
    b.returns.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index j = idx[static_cast<std::size_t>(k)];
      b.obs.col(k) = obs.col(j);
      b.actions.col(k) = actions.col(j);
      b.log_probs[k] = log_probs[j];
      b.advantages[k] = advantages[j];
      b.returns[k] = returns[j];
    }
    return b;
  }
};

struct LossTerms {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;      // k3 estimator E[(r - 1) - log r]
  double clip_fraction = 0.0;
};

struct LossGrad {
  LossTerms terms;
  Eigen::VectorXd grad;
};

/// Clipped surrogate + value MSE - entropy bonus, with its parameter gradient.
/// Advantages are used as given.
inline LossGrad ppo_loss(const PolicyParams& p, const PpoBatch& b, const PpoConfig& cfg) {
  const ForwardCache c = forward(p, b.obs);
  const Eigen::Index n = b.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd log_std = p.log_std();
  const Eigen::ArrayXd var = (2.0 * log_std.array()).exp();

  Eigen::MatrixXd d_mean(c.mean.rows(), n);
  Eigen::RowVectorXd d_value(n);
  Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(log_std.size());
  LossTerms t;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::VectorXd diff = b.actions.col(k) - c.mean.col(k);
    const double logp = gaussian_log_prob(c.mean.col(k), log_std, b.actions.col(k));
    const double log_ratio = logp - b.log_probs[k];
    const double r = std::exp(log_ratio);
    const double a = b.advantages[k];
    const double clipped = std::clamp(r, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclipped_obj = r * a;
    const double clipped_obj = clipped * a;
    t.policy_loss -= std::min(unclipped_obj, clipped_obj) * inv_n;
    t.approx_kl += ((r - 1.0) - log_ratio) * inv_n;
    if (std::abs(r - 1.0) > cfg.clip) t.clip_fraction += inv_n;

    // Gradient flows only through the branch that min() selected.
    const double d_logp = unclipped_obj <= clipped_obj ? -a * r * inv_n : 0.0;
    d_mean.col(k) = d_logp * (diff.array() / var).matrix();
    d_log_std.array() += d_logp * ((diff.array().square() / var) - 1.0);

    const double err = c.value[k] - b.returns[k];
    t.value_loss += err * err * inv_n;
    d_value[k] = cfg.value_coef * 2.0 * err * inv_n;
  }
  t.entropy = log_std.sum() + 0.5 * static_cast<double>(log_std.size()) *
                                  std::log(2.0 * std::numbers::pi * std::numbers::e);
  d_log_std.array() -= cfg.entropy_coef;

  LossGrad out;
  out.terms = t;
  out.grad = backward(p, c, d_mean, d_value, d_log_std);
  return out;
}

inline double total_loss(const LossTerms& t, const PpoConfig& cfg) {
  return t.policy_loss + cfg.value_coef * t.value_loss - cfg.entropy_coef * t.entropy;
}

class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  long steps() const { return t_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  void restore(Eigen::VectorXd m, Eigen::VectorXd v, long t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  Eigen::VectorXd m_, v_;
  double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

/// `passes` shuffled sweeps over the dataset in minibatches, one Adam step per
/// minibatch with the global gradient norm clipped.
inline UpdateStats ppo_update(PolicyParams& p, Adam& opt, PpoBatch batch, const PpoConfig& cfg,
                              double lr, Rng& rng) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw std::invalid_argument("empty PPO dataset");
  if (cfg.normalize_advantages && n > 1) {
    const double mu = batch.advantages.mean();
    const double sd = std::sqrt((batch.advantages.array() - mu).square().mean());
    batch.advantages = (batch.advantages.array() - mu) / (sd + 1e-8);
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index mb = std::clamp<Eigen::Index>(cfg.minibatch_size, 1, n);

  UpdateStats s;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += mb) {
      const Eigen::Index len = std::min(mb, n - start);
      const PpoBatch sub =
          batch.select(std::span<const Eigen::Index>(order.data() + start, static_cast<std::size_t>(len)));
      LossGrad lg = ppo_loss(p, sub, cfg);
      const double norm = lg.grad.norm();
      if (!std::isfinite(norm)) throw DivergedUpdate("non-finite gradient");
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) lg.grad *= cfg.max_grad_norm / norm;
      opt.step(p.flat(), lg.grad, lr);
      if (!p.flat().allFinite()) throw DivergedUpdate("non-finite parameters after update");
      s.policy_loss += lg.terms.policy_loss;
      s.value_loss += lg.terms.value_loss;
      s.entropy += lg.terms.entropy;
      s.approx_kl += lg.terms.approx_kl;
      s.clip_fraction += lg.terms.clip_fraction;
      ++s.minibatches;
    }
  }
  if (s.minibatches > 0) {
    const double k = 1.0 / s.minibatches;
    s.policy_loss *= k;
    s.value_loss *= k;
    s.entropy *= k;
    s.approx_kl *= k;
    s.clip_fraction *= k;
  }
  return s;
}

}  // namespace spinrally
