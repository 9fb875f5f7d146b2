#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>

#include "spinrally/rally.hpp"

namespace spinrally {

/// Reward coefficients; defaults are the published table values.
struct RewardConstants {
  double a21 = 1.0, a22 = 0.25, a23 = 0.1;
  double a31 = 10.0, a32 = 4.0, a33 = 1.0;
  double a41 = 1.0, a42 = 0.25, a43 = 0.1;
  double a51 = 25.0, a52 = 50.0, a53 = 10.0;
  double a63 = 1.0;
  double a73 = 30.0, b73 = 40.0;
  double c = 0.02, d = 0.02, e = 0.1;
  double racket_velocity_clip = 10.0;  // |v_rhb_x| clip before entering R[5][2]
};

struct RewardFeatures {
  double racket_ball_distance = 0.0;   // d_rb, m
  double ball_target_distance = 0.0;   // d_bt, m
  double racket_hit_velocity_x = 0.0;  // v_rhb_x, m/s (signed)
  double landing_error = 0.0;          // e_lt, m
};

/// Curriculum stage 1 (catch), 2 (return) or 3 (return to target).
class StageIndex {
 public:
  constexpr explicit StageIndex(int s) : value_(s) {
    if (s < 1 || s > 3) throw std::out_of_range("stage must be 1, 2 or 3");
  }
  constexpr int value() const { return value_; }
  constexpr int column() const { return value_ - 1; }
  constexpr bool operator==(const StageIndex&) const = default;

 private:
  int value_;
};

using RewardMatrix = std::array<std::array<double, 3>, kNumTrajectoryStates>;

inline double inverse_square_falloff(double d) {
  const double q = 1.0 + d * d;
  return 1.0 / (q * q);
}

/// Stage reward matrix: one row per trajectory state (cycle order), one
/// column per curriculum stage.
inline RewardMatrix build_reward_matrix(const RewardFeatures& f, const RewardConstants& k) {
  const double near = inverse_square_falloff(f.racket_ball_distance);
  const double vx =
      std::clamp(f.racket_hit_velocity_x, -k.racket_velocity_clip, k.racket_velocity_clip);
  RewardMatrix R{};
  R[0] = {0.0, 0.0, 0.0};
  R[1] = {k.a21 * near, k.a22 * near, k.a23 * near};
  R[2] = {k.a31, k.a32, k.a33};
  R[3] = {k.a41 * near, k.a42 * near, k.a43 * near};
  R[4] = {k.a51, k.a52 + vx, k.a53};
  R[5] = {0.0, 0.0, k.a63 * inverse_square_falloff(f.ball_target_distance)};
  R[6] = {0.0, 0.0, k.a73 + k.b73 * inverse_square_falloff(f.landing_error)};
  R[7] = {0.0, 0.0, 0.0};
  return R;
}

/// Row selection by the one-hot trajectory state, column by stage.
inline double stage_reward(TrajectoryState state, const RewardFeatures& f, StageIndex stage,
                           const RewardConstants& k) {
  std::array<double, kNumTrajectoryStates> onehot{};
  onehot[index_of(state)] = 1.0;
  const RewardMatrix R = build_reward_matrix(f, k);
  double r = 0.0;
  for (int j = 0; j < kNumTrajectoryStates; ++j) r += onehot[j] * R[j][stage.column()];
  return r;
}

/// Penalty on torque, action jitter and undesired contacts (non-positive).
inline double performance_reward(std::span<const double> torques, std::span<const double> action,
                                 std::span<const double> prev_action, int contact_count,
                                 const RewardConstants& k) {
  if (action.size() != prev_action.size()) throw std::invalid_argument("action size mismatch");
  double torque = 0.0;
  for (double t : torques) torque += std::abs(t);
  double jitter = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double da = action[i] - prev_action[i];
    jitter += da * da;
  }
  return -(k.c * torque + k.d * jitter + k.e * contact_count);
}

inline double total_reward(double stage_part, double performance_part) {
  return stage_part + performance_part;
}

}  // namespace spinrally
