#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "spinrally/rng.hpp"

namespace spinrally {

struct NetworkShape {
  int obs_dim = 37;
  int hidden = 256;
  int layers = 2;
  int act_dim = 7;

  int layer_input(int l) const { return l == 0 ? obs_dim : hidden + obs_dim; }
  bool operator==(const NetworkShape&) const = default;
};

/// Actor-critic weights in one flat vector. Hidden layer l > 0 sees the
/// previous activation stacked on top of the observation; the actor mean
/// (tanh-bounded) and the value head share the whole trunk. The log standard
/// deviation is state independent.
class PolicyParams {
 public:
  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  PolicyParams() = default;
  explicit PolicyParams(NetworkShape shape) : shape_(shape) {
    if (shape.layers < 1 || shape.hidden < 1 || shape.obs_dim < 1 || shape.act_dim < 1)
      throw std::invalid_argument("invalid network shape");
    std::size_t off = 0;
    for (int l = 0; l < shape.layers; ++l) {
      w_off_.push_back(off);
      off += static_cast<std::size_t>(shape.hidden) * shape.layer_input(l);
      b_off_.push_back(off);
      off += shape.hidden;
    }
    actor_w_ = off;
    off += static_cast<std::size_t>(shape.act_dim) * shape.hidden;
    actor_b_ = off;
    off += shape.act_dim;
    log_std_ = off;
    off += shape.act_dim;
    critic_w_ = off;
    off += shape.hidden;
    critic_b_ = off;
    off += 1;
    theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off));
  }

  const NetworkShape& shape() const { return shape_; }
  Eigen::VectorXd& flat() { return theta_; }
  const Eigen::VectorXd& flat() const { return theta_; }
  Eigen::Index size() const { return theta_.size(); }

  MatMap weight(int l) { return {ptr(w_off_[l]), shape_.hidden, shape_.layer_input(l)}; }
  ConstMatMap weight(int l) const { return {ptr(w_off_[l]), shape_.hidden, shape_.layer_input(l)}; }
  VecMap bias(int l) { return {ptr(b_off_[l]), shape_.hidden}; }
  ConstVecMap bias(int l) const { return {ptr(b_off_[l]), shape_.hidden}; }
  MatMap actor_weight() { return {ptr(actor_w_), shape_.act_dim, shape_.hidden}; }
  ConstMatMap actor_weight() const { return {ptr(actor_w_), shape_.act_dim, shape_.hidden}; }
  VecMap actor_bias() { return {ptr(actor_b_), shape_.act_dim}; }
  ConstVecMap actor_bias() const { return {ptr(actor_b_), shape_.act_dim}; }
  VecMap log_std() { return {ptr(log_std_), shape_.act_dim}; }
  ConstVecMap log_std() const { return {ptr(log_std_), shape_.act_dim}; }
  MatMap critic_weight() { return {ptr(critic_w_), 1, shape_.hidden}; }
  ConstMatMap critic_weight() const { return {ptr(critic_w_), 1, shape_.hidden}; }
  double& critic_bias() { return theta_[static_cast<Eigen::Index>(critic_b_)]; }
  double critic_bias() const { return theta_[static_cast<Eigen::Index>(critic_b_)]; }

  /// Uniform fan-in scaled init; small actor head so initial means sit near 0.
  static PolicyParams initialize(NetworkShape shape, Rng& rng, double init_log_std = -0.5) {
    PolicyParams p(shape);
    auto fill = [&](auto m, double scale) {
      const double lim = scale * std::sqrt(6.0 / static_cast<double>(m.cols() + m.rows()));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    };
    for (int l = 0; l < shape.layers; ++l) fill(p.weight(l), 1.0);
    fill(p.actor_weight(), 0.01);
    fill(p.critic_weight(), 1.0);
    p.log_std().setConstant(init_log_std);
    return p;
  }

 private:
  double* ptr(std::size_t off) { return theta_.data() + off; }
  const double* ptr(std::size_t off) const { return theta_.data() + off; }

  NetworkShape shape_;
  Eigen::VectorXd theta_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t actor_w_ = 0, actor_b_ = 0, log_std_ = 0, critic_w_ = 0, critic_b_ = 0;
};

/// Activations kept for the backward pass. Columns are samples.
struct ForwardCache {
  Eigen::MatrixXd obs;                  // obs_dim x B (normalized)
  std::vector<Eigen::MatrixXd> hidden;  // per layer, hidden x B
  Eigen::MatrixXd mean;                 // act_dim x B
  Eigen::RowVectorXd value;             // 1 x B
  Eigen::VectorXd std;                  // act_dim
};

inline Eigen::MatrixXd stack_with_obs(const Eigen::MatrixXd& h, const Eigen::MatrixXd& obs) {
  Eigen::MatrixXd in(h.rows() + obs.rows(), h.cols());
  in.topRows(h.rows()) = h;
  in.bottomRows(obs.rows()) = obs;
  return in;
}

inline ForwardCache forward(const PolicyParams& p, const Eigen::Ref<const Eigen::MatrixXd>& obs) {
  const NetworkShape& s = p.shape();
  if (obs.rows() != s.obs_dim) throw std::invalid_argument("observation dimension mismatch");
  ForwardCache c;
  c.obs = obs;
  c.hidden.resize(s.layers);
  for (int l = 0; l < s.layers; ++l) {
    Eigen::MatrixXd z =
        l == 0 ? Eigen::MatrixXd(p.weight(0) * c.obs)
               : Eigen::MatrixXd(p.weight(l) * stack_with_obs(c.hidden[l - 1], c.obs));
    z.colwise() += p.bias(l);
    c.hidden[l] = z.array().tanh();
  }
  const Eigen::MatrixXd& top = c.hidden.back();
  Eigen::MatrixXd za = p.actor_weight() * top;
  za.colwise() += p.actor_bias();
  c.mean = za.array().tanh();
  c.value = (p.critic_weight() * top).array() + p.critic_bias();
  c.std = p.log_std().array().exp();
  return c;
}

/// Reverse-mode pass for upstream gradients on the means, values and log-std.
inline Eigen::VectorXd backward(const PolicyParams& p, const ForwardCache& c,
                                const Eigen::MatrixXd& d_mean, const Eigen::RowVectorXd& d_value,
                                const Eigen::VectorXd& d_log_std) {
  const NetworkShape& s = p.shape();
  PolicyParams g(s);
  const Eigen::MatrixXd& top = c.hidden.back();

  const Eigen::MatrixXd dza = d_mean.array() * (1.0 - c.mean.array().square());
  g.actor_weight() = dza * top.transpose();
  g.actor_bias() = dza.rowwise().sum();
  g.critic_weight() = d_value * top.transpose();
  g.critic_bias() = d_value.sum();
  g.log_std() = d_log_std;

  Eigen::MatrixXd dh = p.actor_weight().transpose() * dza + p.critic_weight().transpose() * d_value;
  for (int l = s.layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd dz = dh.array() * (1.0 - c.hidden[l].array().square());
    g.bias(l) = dz.rowwise().sum();
    if (l == 0) {
      g.weight(0) = dz * c.obs.transpose();
    } else {
      g.weight(l) = dz * stack_with_obs(c.hidden[l - 1], c.obs).transpose();
      dh = (p.weight(l).transpose() * dz).topRows(s.hidden);
    }
  }
  return g.flat();
}

}  // namespace spinrally
