#include <catch_amalgamated.hpp>

#include <array>
#include <random>

#include "spinrally/reward.hpp"

using namespace spinrally;
using Catch::Approx;
using S = TrajectoryState;

namespace {

using Table = std::array<std::array<double, 3>, 8>;

// Hand-evaluated matrix for d_bt = 1, v_rhb_x = 1.5, e_lt = 0 and a given
// approach factor 1 / (1 + d_rb^2)^2.
Table golden(double near) {
  return {{{0, 0, 0},
           {1 * near, 0.25 * near, 0.1 * near},
           {10, 4, 1},
           {1 * near, 0.25 * near, 0.1 * near},
           {25, 51.5, 10},
           {0, 0, 0.25},
           {0, 0, 70},
           {0, 0, 0}}};
}

bool same(double a, double b) {
  // Exact, or one rounding apart for non-dyadic factors.
  return a == b || std::abs(a - b) <= 1e-15 * std::abs(b);
}

}  // namespace

TEST_CASE("default constants") {
  const RewardConstants k;
  CHECK(k.a21 == 1.0);
  CHECK(k.a22 == 0.25);
  CHECK(k.a23 == 0.1);
  CHECK(k.a31 == 10.0);
  CHECK(k.a32 == 4.0);
  CHECK(k.a33 == 1.0);
  CHECK(k.a41 == 1.0);
  CHECK(k.a42 == 0.25);
  CHECK(k.a43 == 0.1);
  CHECK(k.a51 == 25.0);
  CHECK(k.a52 == 50.0);
  CHECK(k.a53 == 10.0);
  CHECK(k.a63 == 1.0);
  CHECK(k.a73 == 30.0);
  CHECK(k.b73 == 40.0);
  CHECK(k.c == 0.02);
  CHECK(k.d == 0.02);
  CHECK(k.e == 0.1);
}

TEST_CASE("golden 8x3 table at d_rb = 0, 1, 2") {
  const RewardConstants k;
  const std::array<std::pair<double, double>, 3> cases{{{0.0, 1.0}, {1.0, 0.25}, {2.0, 1.0 / 25.0}}};
  for (auto [d_rb, near] : cases) {
    RewardFeatures f;
    f.racket_ball_distance = d_rb;
    f.ball_target_distance = 1.0;
    f.racket_hit_velocity_x = 1.5;
    f.landing_error = 0.0;
    const Table want = golden(near);
    const RewardMatrix R = build_reward_matrix(f, k);
    for (int s = 0; s < 8; ++s) {
      for (int c = 0; c < 3; ++c) {
        INFO("d_rb " << d_rb << " state " << s << " stage " << c + 1);
        CHECK(same(R[s][c], want[s][c]));
        CHECK(stage_reward(static_cast<S>(s), f, StageIndex(c + 1), k) == R[s][c]);
      }
    }
  }
}

TEST_CASE("reward matrix examples") {
  const RewardConstants k;
  RewardFeatures f;
  const RewardMatrix R0 = build_reward_matrix(f, k);
  CHECK(R0[1] == std::array<double, 3>{1.0, 0.25, 0.1});
  CHECK(R0[6][2] == 70.0);
  CHECK(R0[2][0] == 10.0);

  f.racket_ball_distance = 1.0;
  const RewardMatrix R1 = build_reward_matrix(f, k);
  CHECK(R1[3] == std::array<double, 3>{0.25, 0.0625, 0.025});
}

TEST_CASE("stage_reward examples") {
  const RewardConstants k;
  RewardFeatures f;
  CHECK(stage_reward(S::T1, f, StageIndex(1), k) == 10.0);
  for (int s = 1; s <= 3; ++s) {
    f.racket_ball_distance = 0.3 * s;
    f.landing_error = 0.2 * s;
    CHECK(stage_reward(S::T0, f, StageIndex(s), k) == 0.0);
    CHECK(stage_reward(S::T30, f, StageIndex(s), k) == 0.0);
  }
  f = {};
  f.racket_hit_velocity_x = 1.5;
  CHECK(stage_reward(S::T2, f, StageIndex(2), k) == 51.5);
  f.racket_hit_velocity_x = 25.0;
  CHECK(stage_reward(S::T2, f, StageIndex(2), k) == 60.0);
  f.racket_hit_velocity_x = -25.0;
  CHECK(stage_reward(S::T2, f, StageIndex(2), k) == 40.0);
  CHECK_THROWS_AS(StageIndex(0), std::out_of_range);
  CHECK_THROWS_AS(StageIndex(4), std::out_of_range);
}

TEST_CASE("performance_reward examples") {
  const RewardConstants k;
  const std::array<double, 7> zero{};
  CHECK(performance_reward(zero, zero, zero, 0, k) == 0.0);

  const std::array<double, 7> tau{4, -3, 1, -1, 0.5, -0.25, 0.25};
  CHECK(performance_reward(tau, zero, zero, 0, k) == Approx(-0.2).epsilon(1e-14));

  std::array<double, 7> a{}, b{};
  a[0] = 1.0;
  b[3] = -1.0;
  CHECK(performance_reward(zero, a, b, 0, k) == Approx(-0.04).epsilon(1e-14));

  CHECK(performance_reward(zero, zero, zero, 3, k) == Approx(-0.3).epsilon(1e-14));
  const std::array<double, 3> short_action{};
  CHECK_THROWS(performance_reward(zero, short_action, zero, 0, k));
}

TEST_CASE("total_reward examples") {
  CHECK(total_reward(10, -0.2) == 9.8);
  CHECK(total_reward(0, 0) == 0.0);
  CHECK(total_reward(70, -0.04) == 69.96);
}

TEST_CASE("monotone in the distance features") {
  const RewardConstants k;
  double prev01 = 1e9, prev12 = 1e9, prev_e = 1e9, prev_bt = 1e9;
  for (double d = 0.0; d <= 5.0; d += 0.05) {
    RewardFeatures f;
    f.racket_ball_distance = d;
    f.landing_error = d;
    f.ball_target_distance = d;
    const double r01 = stage_reward(S::T01, f, StageIndex(1), k);
    const double r12 = stage_reward(S::T12, f, StageIndex(2), k);
    const double re = stage_reward(S::T3, f, StageIndex(3), k);
    const double rbt = stage_reward(S::T23, f, StageIndex(3), k);
    CHECK(r01 < prev01);
    CHECK(r12 < prev12);
    CHECK(re < prev_e);
    CHECK(rbt < prev_bt);
    prev01 = r01;
    prev12 = r12;
    prev_e = re;
    prev_bt = rbt;
  }
}

TEST_CASE("entry bounds and stage-1 independence of target features") {
  const RewardConstants k;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 10.0), vel(-10.0, 10.0);
  for (int i = 0; i < 10'000; ++i) {
    RewardFeatures f{dist(rng), dist(rng), vel(rng), dist(rng)};
    const RewardMatrix R = build_reward_matrix(f, k);
    for (int s = 0; s < 8; ++s) {
      for (int c = 0; c < 3; ++c) {
        if (s == 4 && c == 1) {
          CHECK(R[s][c] >= 40.0);
          CHECK(R[s][c] <= 60.0);
        } else {
          CHECK(R[s][c] >= 0.0);
          CHECK(R[s][c] <= 70.0);
        }
      }
    }
    RewardFeatures g = f;
    g.ball_target_distance = dist(rng);
    g.landing_error = dist(rng);
    const RewardMatrix Rg = build_reward_matrix(g, k);
    for (int s = 0; s < 8; ++s) {
      CHECK(Rg[s][0] == R[s][0]);
      CHECK(Rg[s][1] == R[s][1]);
    }
  }
}
