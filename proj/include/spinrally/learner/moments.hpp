#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include <Eigen/Core>

namespace spinrally {

/// Streaming count / mean / second central moment, mergeable pairwise.
struct RunningMoments {
  double count = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd m2;

  RunningMoments() = default;
  explicit RunningMoments(int dim) : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)) {}

  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd variance() const {
    return count > 0.0 ? Eigen::VectorXd(m2 / count) : Eigen::VectorXd::Zero(dim());
  }
  Eigen::VectorXd stddev() const { return variance().cwiseSqrt(); }
};

/// Welford update with one sample.
inline RunningMoments update_moments(RunningMoments m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.dim()) throw std::invalid_argument("moment dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), m.dim());
  m.count += 1.0;
  const Eigen::VectorXd delta = v - m.mean;
  m.mean += delta / m.count;
  m.m2 += delta.cwiseProduct(v - m.mean);
  return m;
}

/// Chan et al. pairwise combination.
inline RunningMoments merge_moments(const RunningMoments& a, const RunningMoments& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("moment dimension mismatch");
  if (b.count == 0.0) return a;
  if (a.count == 0.0) return b;
  RunningMoments out(a.dim());
  out.count = a.count + b.count;
  const Eigen::VectorXd delta = b.mean - a.mean;
  out.mean = a.mean + delta * (b.count / out.count);
  out.m2 = a.m2 + b.m2 + delta.cwiseProduct(delta) * (a.count * b.count / out.count);
  return out;
}

/// Two-pass moments of the columns of a (dim x n) block.
inline RunningMoments batch_moments(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  RunningMoments m(static_cast<int>(samples.rows()));
  if (samples.cols() == 0) return m;
  m.count = static_cast<double>(samples.cols());
  m.mean = samples.rowwise().mean();
  m.m2 = (samples.colwise() - m.mean).rowwise().squaredNorm();
  return m;
}

/// Shrinks the sample count to `floor` (never raises it) while keeping mean and
/// variance, so statistics of a new curriculum stage are absorbed quickly.
inline RunningMoments reset_moment_count(RunningMoments m, double floor = 1e4) {
  if (m.count > floor) {
    m.m2 *= floor / m.count;
    m.count = floor;
  }
  return m;
}

inline constexpr double kNormEpsilon = 1e-6;
inline constexpr double kNormClip = 10.0;

/// (x - mean) / max(std, 1e-6), clipped to [-10, 10]; identity until two
/// samples have been seen.
inline Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& x, const RunningMoments& m) {
  if (m.count < 2.0) return x;
  const Eigen::VectorXd sd = m.stddev().cwiseMax(kNormEpsilon);
  return ((x - m.mean).cwiseQuotient(sd)).cwiseMax(-kNormClip).cwiseMin(kNormClip);
}

inline Eigen::MatrixXd normalize_columns(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                         const RunningMoments& m) {
  if (m.count < 2.0) return x;
  const Eigen::VectorXd inv = m.stddev().cwiseMax(kNormEpsilon).cwiseInverse();
  Eigen::MatrixXd out = (x.colwise() - m.mean).array().colwise() * inv.array();
  return out.cwiseMax(-kNormClip).cwiseMin(kNormClip);
}

}  // namespace spinrally
