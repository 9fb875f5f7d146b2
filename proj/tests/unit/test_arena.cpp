#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "spinrally/arena.hpp"
#include "spinrally/parallel.hpp"

using namespace spinrally;
using Catch::Approx;
using S = TrajectoryState;

namespace {

ArenaConfig quiet_config(ChainSpec chain = ChainSpec::default7()) {
  ArenaConfig c;
  c.chain = std::move(chain);
  return c;
}

RallySeed seed_at(Vec3 p, Vec3 v, Vec3 w = Vec3::Zero(), AeroCoefficients a = {0.1, 0.03}) {
  RallySeed s;
  s.p0 = p;
  s.v0 = v;
  s.w0 = w;
  s.aero = a;
  return s;
}

// Ball just above the robot half, about to land.
RallySeed landing_seed(const ArenaConfig& c) {
  return seed_at({-0.5, 0.0, c.table.height + c.ball.radius + 0.01}, {-1.0, 0.0, -2.0});
}

JointVector hold(const RallyEnv& env) { return targets_to_action(env.config().chain, env.robot().q); }

JointVector random_q(const ChainSpec& c, std::mt19937_64& rng) {
  JointVector q{};
  for (int i = 0; i < c.dof(); ++i)
    q[i] = std::uniform_real_distribution<double>(c.joints[i].q_min, c.joints[i].q_max)(rng);
  return q;
}

double mechanical_energy(const BallState& b, const BallProperties& props) {
  return 0.5 * props.mass * b.v.squaredNorm() + props.mass * 9.81 * b.p.z();
}

}  // namespace

TEST_CASE("forward kinematics at the home pose") {
  SECTION("default chain") {
    const ChainSpec c = ChainSpec::default7();
    const JointVector q = c.home(), qd{};
    const ChainPose p = forward_kinematics(c, q, qd);
    CHECK(p.racket.position.x() == Approx(-1.2).margin(1e-12));
    CHECK(p.racket.position.y() == Approx(0.0).margin(1e-12));
    CHECK(p.racket.position.z() == Approx(1.11).margin(1e-12));
    CHECK(p.racket.orientation.w() == Approx(1.0).margin(1e-12));
    CHECK(p.racket.normal().isApprox(Vec3::UnitX(), 1e-12));
    CHECK(p.racket.linear_velocity == Vec3::Zero());
    CHECK(p.points.size() == 9);
  }
  SECTION("desk chain") {
    const ChainSpec c = ChainSpec::desk4();
    const JointVector q = c.home(), qd{};
    const ChainPose p = forward_kinematics(c, q, qd);
    CHECK(p.racket.position.x() == Approx(-1.43).margin(1e-12));
    CHECK(p.racket.position.y() == Approx(0.0).margin(1e-12));
    CHECK(p.racket.position.z() == Approx(1.085).margin(1e-12));
    CHECK(p.racket.normal().isApprox(Vec3::UnitX(), 1e-12));
    CHECK(p.points.size() == 6);
  }
}

TEST_CASE("racket velocity matches finite differences and the quaternion stays unit") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const ChainSpec& c : {ChainSpec::default7(), ChainSpec::desk4()}) {
    for (int trial = 0; trial < 500; ++trial) {
      const JointVector q = random_q(c, rng);
      JointVector qd{};
      for (int i = 0; i < c.dof(); ++i) qd[i] = u(rng);
      const ChainPose p = forward_kinematics(c, q, qd);
      const double h = 1e-6;
      JointVector qp = q, qm = q;
      for (int i = 0; i < c.dof(); ++i) {
        qp[i] += h * qd[i];
        qm[i] -= h * qd[i];
      }
      const JointVector zero{};
      const Vec3 fd = (forward_kinematics(c, qp, zero).racket.position -
                       forward_kinematics(c, qm, zero).racket.position) /
                      (2.0 * h);
      CHECK((fd - p.racket.linear_velocity).norm() < 1e-4);
      CHECK(std::abs(p.racket.orientation.norm() - 1.0) < 1e-9);

      const ChainPose still = forward_kinematics(c, q, zero);
      CHECK(still.racket.linear_velocity == Vec3::Zero());
    }
  }
}

TEST_CASE("pd_control examples") {
  CHECK(pd_control(0.3, 0.0, 0.3, {50, 2, 100}) == 0.0);
  CHECK(pd_control(0.0, 0.0, 0.1, {50, 0, 100}) == Approx(5.0).epsilon(1e-14));
  CHECK(pd_control(0.0, 0.0, 1e6, {50, 0, 100}) == 100.0);
  CHECK(pd_control(0.0, 0.0, -1e6, {50, 0, 100}) == -100.0);
  CHECK(pd_control(0.0, 2.0, 0.0, {50, 3, 100}) == -6.0);
}

TEST_CASE("action map round-trips through joint targets") {
  std::mt19937_64 rng(4);
  for (const ChainSpec& c : {ChainSpec::default7(), ChainSpec::desk4()}) {
    for (int trial = 0; trial < 200; ++trial) {
      const JointVector q = random_q(c, rng);
      const JointVector t = action_to_targets(c, targets_to_action(c, q));
      for (int i = 0; i < c.dof(); ++i) CHECK(t[i] == Approx(q[i]).margin(1e-12));
    }
    JointVector lo{}, hi{};
    lo.fill(-1.0);
    hi.fill(1.0);
    const JointVector a = action_to_targets(c, lo), b = action_to_targets(c, hi);
    for (int i = 0; i < c.dof(); ++i) {
      CHECK(a[i] == c.joints[i].q_min);
      CHECK(b[i] == c.joints[i].q_max);
    }
  }
}

TEST_CASE("sense_ball examples") {
  std::vector<BallSample> truth;
  for (int k = 0; k < 6; ++k) truth.push_back({Vec3(k, 2.0 * k, 3.0), Vec3(-k, 0.5, 0.0)});
  Rng rng(8);

  SECTION("zero config is a passthrough") {
    const NoiseLatencyConfig cfg;
    const SensedBall s = sense_ball(truth, cfg, 0, rng, std::nullopt);
    CHECK_FALSE(s.dropped);
    CHECK(s.sample.p == truth.back().p);
    CHECK(s.sample.v == truth.back().v);
  }
  SECTION("delay picks an older frame; noise is zero-mean with the configured spread") {
    NoiseLatencyConfig cfg;
    const SensedBall s = sense_ball(truth, cfg, 3, rng, std::nullopt);
    CHECK(s.sample.p == truth[truth.size() - 4].p);

    cfg.sigma_ball_pos = 0.01;
    cfg.sigma_ball_vel = 0.2;
    const int n = 20'000;
    double sum = 0.0, sum2 = 0.0, vsum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const SensedBall r = sense_ball(truth, cfg, 3, rng, std::nullopt);
      const double e = r.sample.p.x() - truth[2].p.x();
      sum += e;
      sum2 += e * e;
      const double ev = r.sample.v.z() - truth[2].v.z();
      vsum2 += ev * ev;
    }
    CHECK(std::abs(sum / n) < 4.0 * 0.01 / std::sqrt(n));
    CHECK(std::sqrt(sum2 / n) == Approx(0.01).epsilon(0.03));
    CHECK(std::sqrt(vsum2 / n) == Approx(0.2).epsilon(0.03));
  }
  SECTION("dropout holds the previous emitted sample") {
    NoiseLatencyConfig cfg;
    cfg.dropout_prob = std::nextafter(1.0, 0.0);
    const BallSample prev{Vec3(9, 9, 9), Vec3(1, 1, 1)};
    for (int i = 0; i < 100; ++i) {
      const SensedBall s = sense_ball(truth, cfg, 0, rng, prev);
      CHECK(s.dropped);
      CHECK(s.sample.p == prev.p);
      CHECK(s.sample.v == prev.v);
    }
    // Nothing to hold on the first frame.
    CHECK_FALSE(sense_ball(truth, cfg, 0, rng, std::nullopt).dropped);
  }
  SECTION("invalid configs are rejected") {
    NoiseLatencyConfig cfg;
    cfg.delay_min = 3;
    cfg.delay_max = 1;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.dropout_prob = 1.0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.sigma_ball_pos = -1.0;
    CHECK_THROWS(cfg.validate());
  }
}

TEST_CASE("observation layout") {
  STATIC_REQUIRE(kObsDim == 37);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    ObservationFields f;
    for (double& x : f.q) x = u(rng);
    for (double& x : f.qd) x = u(rng);
    f.racket_position = {u(rng), u(rng), u(rng)};
    f.racket_orientation = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)).normalized();
    f.racket_velocity = {u(rng), u(rng), u(rng)};
    f.ball_position = {u(rng), u(rng), u(rng)};
    f.ball_velocity = {u(rng), u(rng), u(rng)};
    f.target = {u(rng), u(rng)};
    f.state_index = static_cast<int>(rng() % 8);
    f.continuous_state = continuous_onehot(static_cast<S>(f.state_index));
    CHECK(unpack(pack(f)) == f);
    const Observation o = pack(f);
    CHECK(pack(unpack(o)) == o);
    CHECK(o[0] == f.q[0]);
    CHECK(o[14] == f.racket_position.x());
    CHECK(o[17] == f.racket_orientation[0]);
    CHECK(o[24] == f.ball_position.x());
    CHECK(o[30] == f.target[0]);
    CHECK(o[32] == f.state_index);
  }

  for (int i = 0; i < 8; ++i) {
    const S s = static_cast<S>(i);
    const auto h = continuous_onehot(s);
    const double sum = h[0] + h[1] + h[2] + h[3];
    CHECK(sum == (is_instantaneous(s) ? 0.0 : 1.0));
  }
  CHECK(continuous_onehot(S::T12) == std::array<double, 4>{0, 1, 0, 0});
  CHECK(continuous_onehot(S::T01) == std::array<double, 4>{1, 0, 0, 0});
  CHECK(continuous_onehot(S::T30) == std::array<double, 4>{0, 0, 0, 1});
}

TEST_CASE("reset") {
  const ArenaConfig cfg = quiet_config();
  const RallySeed s = seed_at({1.0, 0.2, 1.1}, {-5.0, -0.2, 1.0}, {10, -50, 30}, {0.11, 0.05});

  SECTION("a buffered seed is reproduced exactly") {
    RallyEnv env(cfg, 1);
    SeedBuffer buf(4);
    buf.push(s);
    const Observation o = env.reset(buf);
    CHECK(env.ball() == s.ball());
    CHECK(env.aero() == s.aero);
    CHECK_FALSE(env.episode().random_fallback);
    CHECK(env.state() == S::T0);
    CHECK(env.robot().q == cfg.chain.home());
    const ObservationFields f = unpack(o);
    CHECK(f.continuous_state == std::array<double, 4>{0, 0, 0, 0});
    CHECK(f.state_index == 0);
    CHECK(f.ball_position == s.p0);
    CHECK(f.ball_velocity == s.v0);

    const auto& g = cfg.table;
    CHECK(env.target()[0] >= cfg.target_inset);
    CHECK(env.target()[0] <= 0.5 * g.length - cfg.target_inset);
    CHECK(std::abs(env.target()[1]) <= 0.5 * g.width - cfg.target_inset);
  }
  SECTION("an empty buffer falls back to a random candidate") {
    RallyEnv env(cfg, 1);
    SeedBuffer buf(4);
    env.reset(buf);
    CHECK(env.episode().random_fallback);
    RallySeed drawn;
    drawn.p0 = env.ball().p;
    drawn.v0 = env.ball().v;
    drawn.w0 = env.ball().w;
    drawn.aero = env.aero();
    CHECK(cfg.fallback_ranges.contains(drawn));
  }
  SECTION("same env seed and buffer give identical observations") {
    RallyEnv a(cfg, 77), b(cfg, 77);
    CHECK(a.reset(s) == b.reset(s));
    CHECK(a.reset(std::nullopt) == b.reset(std::nullopt));
  }
  SECTION("episode delay is drawn from the configured range") {
    ArenaConfig c = cfg;
    c.noise.delay_min = 1;
    c.noise.delay_max = 4;
    RallyEnv env(c, 3);
    std::set<int> seen;
    for (int i = 0; i < 200; ++i) {
      env.reset(s);
      seen.insert(env.delay());
    }
    CHECK(seen == std::set<int>{1, 2, 3, 4});
  }
}

TEST_CASE("step examples") {
  const ArenaConfig cfg = quiet_config();

  SECTION("holding the current pose costs nothing") {
    RallyEnv env(cfg, 5);
    env.reset(seed_at({1.2, 0.0, 1.2}, {-4.0, 0.0, 1.0}));
    const StepResult r = env.step(hold(env));
    for (double t : r.info.torques) CHECK(std::abs(t) < 1e-9);
    CHECK(std::abs(r.info.performance_reward) < 1e-9);
    CHECK(r.reward == total_reward(r.info.stage_reward, r.info.performance_reward));
    CHECK(env.state() == S::T01);
    const double d = env.features().racket_ball_distance;
    CHECK(r.info.stage_reward == Approx(1.0 / ((1 + d * d) * (1 + d * d))).epsilon(1e-12));
  }
  SECTION("a bounce on the robot court enters T1 and pays the stage-1 bonus") {
    RallyEnv env(cfg, 5);
    env.reset(landing_seed(cfg));
    const StepResult r = env.step(hold(env));
    CHECK(env.state() == S::T1);
    CHECK(r.info.stage_reward == 10.0);
    REQUIRE(r.info.events.size() == 2);
    CHECK(r.info.events[1].kind == EventKind::bounce_robot_court);
    CHECK(unpack(r.obs).continuous_state == std::array<double, 4>{0, 0, 0, 0});

    const StepResult r2 = env.step(hold(env));
    CHECK(env.state() == S::T12);
    const ObservationFields f = unpack(r2.obs);
    CHECK(f.continuous_state == std::array<double, 4>{0, 1, 0, 0});
    CHECK(f.state_index == 3);
  }
  SECTION("non-finite actions are rejected") {
    RallyEnv env(cfg, 5);
    env.reset(landing_seed(cfg));
    JointVector a = hold(env);
    a[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(env.step(a), NonFiniteAction);
    a[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(env.step(a), NonFiniteAction);
  }
  SECTION("with no noise or delay the observed ball is ground truth") {
    RallyEnv env(cfg, 5);
    env.reset(seed_at({1.2, 0.1, 1.1}, {-5.0, 0.0, 1.5}));
    for (int k = 0; k < 30 && !env.done(); ++k) {
      const StepResult r = env.step(hold(env));
      const ObservationFields f = unpack(r.obs);
      CHECK(f.ball_position == env.ball().p);
      CHECK(f.ball_velocity == env.ball().v);
      CHECK(f.racket_position == env.racket().position);
    }
  }
  SECTION("a delayed sensor lags the truth") {
    ArenaConfig c = cfg;
    c.noise.delay_min = c.noise.delay_max = 2;
    RallyEnv env(c, 5);
    env.reset(seed_at({1.2, 0.1, 1.1}, {-5.0, 0.0, 1.5}));
    std::vector<Vec3> truth{env.ball().p};
    for (int k = 0; k < 20; ++k) {
      const StepResult r = env.step(hold(env));
      truth.push_back(env.ball().p);
      const std::size_t back = std::min<std::size_t>(2, truth.size() - 1);
      CHECK(unpack(r.obs).ball_position == truth[truth.size() - 1 - back]);
    }
  }
}

TEST_CASE("a body hit ends the episode") {
  const ArenaConfig cfg = quiet_config();
  RallyEnv env(cfg, 9);
  env.reset(seed_at({-1.75, 0.0, 1.3}, {0.0, 0.0, -2.0}));
  while (!env.done()) env.step(hold(env));
  REQUIRE(env.episode().terminal);
  CHECK(*env.episode().terminal == TerminalReason::body_contact);
}

TEST_CASE("racket contact is swept and does not tunnel at 25 m/s") {
  for (const ChainSpec& chain : {ChainSpec::default7(), ChainSpec::desk4()}) {
    const ArenaConfig cfg = quiet_config(chain);
    const RallyEnv probe(cfg, 0);
    const Vec3 centre = probe.racket().position;
    const double R = chain.racket_radius;
    for (double offset : {0.0, 0.03, 0.06, R - 0.005, R + 0.005, R + 0.02}) {
      for (double start : {0.30, 0.317, 0.333}) {
        RallyEnv env(cfg, 1);
        // Upward component cancels gravity sag over the short approach.
        const double t_fly = start / 25.0;
        env.reset(seed_at(centre + Vec3(start, offset, 0.5 * 9.81 * t_fly * t_fly), {-25.0, 0.0, 0.0},
                          Vec3::Zero(), {0.0, 0.0}));
        for (int k = 0; k < 12 && !env.done(); ++k) env.step(hold(env));
        bool hit = false;
        for (const auto& e : env.episode().events) hit |= e.kind == EventKind::racket_contact;
        INFO("offset " << offset << " start " << start);
        CHECK(hit == (offset < R));
        if (hit) CHECK(*env.episode().terminal == TerminalReason::volley);
      }
    }
  }
}

TEST_CASE("joint limits hold under fuzzed actions") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (const ChainSpec& chain : {ChainSpec::default7(), ChainSpec::desk4()}) {
    ArenaConfig cfg = quiet_config(chain);
    cfg.time_limit = 100.0;
    RallyEnv env(cfg, 2);
    // Ball far out of reach so the episode only ends on the floor or the time limit.
    int steps = 0;
    while (steps < 3000) {
      env.reset(seed_at({1.2, 0.0, 3.0}, {0.0, 0.0, 8.0}));
      while (!env.done() && steps < 3000) {
        JointVector a{};
        for (double& x : a) x = u(rng);
        env.step(a);
        ++steps;
        for (int i = 0; i < chain.dof(); ++i) {
          const double q = env.robot().q[i];
          CHECK(q >= chain.joints[i].q_min);
          CHECK(q <= chain.joints[i].q_max);
          CHECK(std::isfinite(env.robot().qd[i]));
          CHECK(std::abs(env.robot().qd[i]) <= chain.joints[i].qd_max);
        }
      }
    }
  }
}

TEST_CASE("episodes end within the time limit") {
  const ArenaConfig cfg = quiet_config();
  RallyEnv env(cfg, 12);
  const int max_steps = static_cast<int>(std::ceil(cfg.time_limit / cfg.control_dt));
  for (int ep = 0; ep < 30; ++ep) {
    env.reset(std::nullopt);
    int n = 0;
    while (!env.done()) {
      env.step(hold(env));
      ++n;
    }
    CHECK(n <= max_steps);
    CHECK(env.episode().terminal.has_value() != env.episode().returned);
  }
}

TEST_CASE("ball energy decays in free flight with drag") {
  ArenaConfig cfg = quiet_config();
  for (auto& j : cfg.chain.joints) j.kp = j.kd = 0.0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RallyEnv env(cfg, trial);
    env.reset(seed_at({0.5 + 0.5 * u(rng), 0.4 * u(rng) - 0.2, 1.0 + 0.3 * u(rng)},
                      {-3.0 - 4.0 * u(rng), 0.0, 3.0 * u(rng)}, {0, 200 * u(rng) - 100, 0},
                      {0.05 + 0.15 * u(rng), 0.0}));
    double e = mechanical_energy(env.ball(), cfg.ball);
    while (!env.done()) {
      const StepResult r = env.step(hold(env));
      bool contact = false;
      for (const auto& ev : r.info.events)
        contact |= ev.kind != EventKind::launch && ev.kind != EventKind::net_crossed;
      if (contact) break;
      const double e2 = mechanical_energy(env.ball(), cfg.ball);
      CHECK(e2 < e);
      e = e2;
    }
  }
}

TEST_CASE("batched environments are independent of the worker count") {
  ArenaConfig cfg = quiet_config();
  cfg.noise = {0.005, 0.05, 0, 3, 0.05};
  const SeedRanges ranges;
  constexpr std::size_t kEnvs = 8;

  auto run = [&](unsigned workers, bool reversed) {
    WorkerPool pool(workers);
    std::vector<RallyEnv> envs;
    for (std::size_t i = 0; i < kEnvs; ++i) envs.emplace_back(cfg, 1000 + i);
    std::vector<std::vector<Observation>> obs(kEnvs);
    pool.parallel_for(kEnvs, [&](std::size_t j) {
      const std::size_t i = reversed ? kEnvs - 1 - j : j;
      RallyEnv& env = envs[i];
      obs[i].push_back(env.reset(i % 3 == 0 ? std::nullopt : std::optional(candidate_at(5, i, ranges))));
      for (int k = 0; k < 200; ++k) {
        if (env.done()) obs[i].push_back(env.reset(std::nullopt));
        JointVector a{};
        for (int d = 0; d < kActionDim; ++d) a[d] = std::sin(0.1 * k + d + static_cast<double>(i));
        obs[i].push_back(env.step(a).obs);
      }
    });
    return obs;
  };
  const auto a = run(1, false);
  CHECK(run(3, false) == a);
  CHECK(run(4, true) == a);
}

TEST_CASE("trace export") {
  const ArenaConfig cfg = quiet_config();
  RallyEnv env(cfg, 4);
  env.enable_trace(true);
  env.reset(landing_seed(cfg));
  int steps = 0;
  while (!env.done()) {
    env.step(hold(env));
    ++steps;
  }
  CHECK(env.trace().size() == static_cast<std::size_t>(steps) + 1);
  std::ostringstream os;
  env.write_trace_csv(os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header.rfind("t,px,py,pz,vx,vy,vz,wx,wy,wz,q0", 0) == 0);
  CHECK(header.find(",state,event") != std::string::npos);
  int rows = 0;
  bool saw_bounce = false;
  for (std::string line; std::getline(is, line);) {
    ++rows;
    saw_bounce |= line.find("bounce_robot_court") != std::string::npos;
  }
  CHECK(rows == steps + 1);
  CHECK(saw_bounce);
}
