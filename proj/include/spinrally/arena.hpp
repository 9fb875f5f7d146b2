#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinrally/contact.hpp"
#include "spinrally/errors.hpp"
#include "spinrally/kinematics.hpp"
#include "spinrally/rally.hpp"
#include "spinrally/reward.hpp"
#include "spinrally/rng.hpp"
#include "spinrally/seedgen.hpp"

namespace spinrally {

// ---------------------------------------------------------------------------
// Sensing

struct NoiseLatencyConfig {
  double sigma_ball_pos = 0.0;  // m
  double sigma_ball_vel = 0.0;  // m/s
  int delay_min = 0;            // control steps
  int delay_max = 0;
  double dropout_prob = 0.0;

  void validate() const {
    if (sigma_ball_pos < 0.0 || sigma_ball_vel < 0.0 || delay_min < 0 || delay_max < delay_min ||
        dropout_prob < 0.0 || dropout_prob >= 1.0)
      throw std::invalid_argument("invalid noise/latency config");
  }
};

struct BallSample {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

struct SensedBall {
  BallSample sample;
  bool dropped = false;
};

/// Delayed, noisy view of the ground-truth stream (oldest first). A dropped
/// frame repeats the previously emitted sample.
inline SensedBall sense_ball(std::span<const BallSample> truth, const NoiseLatencyConfig& cfg,
                             int delay, Rng& rng, const std::optional<BallSample>& previous) {
  if (truth.empty()) throw std::invalid_argument("sense_ball needs at least one truth sample");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::array<double, 6> n{};
  for (double& x : n) x = gauss(rng);
  if (previous && u < cfg.dropout_prob) return {*previous, true};

  const std::size_t back = std::min<std::size_t>(static_cast<std::size_t>(std::max(delay, 0)),
                                                 truth.size() - 1);
  BallSample s = truth[truth.size() - 1 - back];
  for (int i = 0; i < 3; ++i) {
    s.p[i] += cfg.sigma_ball_pos * n[i];
    s.v[i] += cfg.sigma_ball_vel * n[3 + i];
  }
  return {s, false};
}

// ---------------------------------------------------------------------------
// Observation layout

inline constexpr int kObsDim = 37;
using Observation = std::array<double, kObsDim>;

/// Named view of the flat observation. Joint blocks are padded with zeros for
/// chains shorter than seven joints.
struct ObservationFields {
  JointVector q{};
  JointVector qd{};
  Vec3 racket_position = Vec3::Zero();
  Eigen::Vector4d racket_orientation{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  Vec3 racket_velocity = Vec3::Zero();
  Vec3 ball_position = Vec3::Zero();
  Vec3 ball_velocity = Vec3::Zero();
  std::array<double, 2> target{};
  int state_index = 0;
  std::array<double, 4> continuous_state{};  // one-hot over T01, T12, T23, T30

  bool operator==(const ObservationFields&) const = default;
};

inline Observation pack(const ObservationFields& f) {
  Observation o{};
  std::size_t k = 0;
  auto put = [&](double x) { o[k++] = x; };
  for (double x : f.q) put(x);
  for (double x : f.qd) put(x);
  for (int i = 0; i < 3; ++i) put(f.racket_position[i]);
  for (int i = 0; i < 4; ++i) put(f.racket_orientation[i]);
  for (int i = 0; i < 3; ++i) put(f.racket_velocity[i]);
  for (int i = 0; i < 3; ++i) put(f.ball_position[i]);
  for (int i = 0; i < 3; ++i) put(f.ball_velocity[i]);
  put(f.target[0]);
  put(f.target[1]);
  put(static_cast<double>(f.state_index));
  for (double x : f.continuous_state) put(x);
  return o;
}

inline ObservationFields unpack(const Observation& o) {
  ObservationFields f;
  std::size_t k = 0;
  auto get = [&] { return o[k++]; };
  for (double& x : f.q) x = get();
  for (double& x : f.qd) x = get();
  for (int i = 0; i < 3; ++i) f.racket_position[i] = get();
  for (int i = 0; i < 4; ++i) f.racket_orientation[i] = get();
  for (int i = 0; i < 3; ++i) f.racket_velocity[i] = get();
  for (int i = 0; i < 3; ++i) f.ball_position[i] = get();
  for (int i = 0; i < 3; ++i) f.ball_velocity[i] = get();
  f.target[0] = get();
  f.target[1] = get();
  f.state_index = static_cast<int>(get());
  for (double& x : f.continuous_state) x = get();
  return f;
}

inline std::array<double, 4> continuous_onehot(TrajectoryState s) {
  std::array<double, 4> h{};
  if (!is_instantaneous(s)) h[index_of(s) / 2] = 1.0;
  return h;
}

// ---------------------------------------------------------------------------
// Environment

struct ArenaConfig {
  TableGeometry table;
  BallProperties ball;
  FlightOptions flight;
  ContactParams table_contact = ContactParams::table();
  ContactParams racket_contact = ContactParams::racket();
  ChainSpec chain = ChainSpec::default7();
  NoiseLatencyConfig noise;
  double control_dt = 1.0 / 120.0;
  int substeps = 3;
  double time_limit = 2.5;    // s
  double target_inset = 0.1;  // m, target rectangle inset from the opponent-court edges
  RewardConstants reward;
  SeedRanges fallback_ranges;

  double physics_dt() const { return control_dt / substeps; }

  /// Candidate rollouts never run longer than an episode may last.
  RolloutSettings rollout_settings() const {
    return {table, ball, flight, physics_dt(), time_limit};
  }

  void validate() const {
    chain.validate();
    noise.validate();
    if (control_dt <= 0.0 || substeps < 1 || time_limit <= 0.0)
      throw std::invalid_argument("invalid timing config");
    if (ball.mass <= 0.0 || ball.radius <= 0.0 || ball.inertia <= 0.0)
      throw std::invalid_argument("invalid ball properties");
    for (const auto* cp : {&table_contact, &racket_contact}) {
      if (!(cp->restitution > 0.0 && cp->restitution <= 1.0) || cp->sliding_friction < 0.0 ||
          cp->rolling_friction < 0.0)
        throw std::invalid_argument("invalid contact params");
    }
  }
};

struct RobotState {
  JointVector q{};
  JointVector qd{};
};

struct StepInfo {
  std::vector<RallyEvent> events;
  std::optional<TerminalReason> terminal;
  bool success = false;  // reached T3 this step
  bool ball_dropped = false;
  double stage_reward = 0.0;
  double performance_reward = 0.0;
  int undesired_contacts = 0;
  JointVector torques{};  // mean |tau| over the physics substeps
};

struct StepResult {
  Observation obs{};
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct EpisodeSummary {
  bool random_fallback = false;
  bool caught = false;    // reached T2
  bool returned = false;  // reached T3
  double landing_error = 0.0;
  std::optional<TerminalReason> terminal;
  std::vector<RallyEvent> events;
  int steps = 0;
  double total_reward = 0.0;
};

struct TraceRow {
  double t = 0.0;
  BallState ball;
  JointVector q{};
  JointVector qd{};
  TrajectoryState state = TrajectoryState::T0;
  std::string event;
};

/// One rally environment: kinematic PD-driven chain, ball flight and contacts,
/// trajectory state machine, staged reward and sensor model. Single owner.
class RallyEnv {
 public:
  /// Optional kinematic ball source used for replaying recordings. Returning
  /// nullopt hands the ball over to simulated flight.
  using BallDriver = std::function<std::optional<BallState>(double t)>;

  RallyEnv(ArenaConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    robot_.q = cfg_.chain.home();
    pose_ = forward_kinematics(cfg_.chain, robot_.q, robot_.qd);
  }

  const ArenaConfig& config() const { return cfg_; }
  void set_stage(StageIndex s) { stage_ = s; }
  StageIndex stage() const { return stage_; }
  void set_ball_driver(BallDriver d) { driver_ = std::move(d); }
  void enable_trace(bool on) { trace_on_ = on; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  const BallState& ball() const { return ball_; }
  const AeroCoefficients& aero() const { return aero_; }
  const RobotState& robot() const { return robot_; }
  const RacketPose& racket() const { return pose_.racket; }
  TrajectoryState state() const { return state_; }
  const std::array<double, 2>& target() const { return target_; }
  int delay() const { return delay_; }
  double time() const { return static_cast<double>(substep_count_) * cfg_.physics_dt(); }
  bool done() const { return done_; }
  const EpisodeSummary& episode() const { return episode_; }

  /// Starts an episode from a buffered seed, or from a random candidate when
  /// none is available (flagged as random_fallback).
  Observation reset(std::optional<RallySeed> seed) {
    robot_ = RobotState{};
    robot_.q = cfg_.chain.home();
    pose_ = forward_kinematics(cfg_.chain, robot_.q, robot_.qd);
    state_ = TrajectoryState::T0;
    done_ = false;
    substep_count_ = 0;
    hit_velocity_x_ = 0.0;
    driver_released_ = false;
    driven_bounce_latch_ = false;
    episode_ = EpisodeSummary{};
    trace_.clear();

    const auto& g = cfg_.table;
    target_[0] = uniform(rng_, cfg_.target_inset, 0.5 * g.length - cfg_.target_inset);
    target_[1] = uniform(rng_, -0.5 * g.width + cfg_.target_inset, 0.5 * g.width - cfg_.target_inset);
    delay_ = std::uniform_int_distribution<int>(cfg_.noise.delay_min, cfg_.noise.delay_max)(rng_);

    if (!seed) {
      seed = sample_candidate(rng_, cfg_.fallback_ranges);
      episode_.random_fallback = true;
    }
    ball_ = seed->ball();
    aero_ = seed->aero;

    prev_action_.fill(0.0);
    const JointVector home_action = targets_to_action(cfg_.chain, robot_.q);
    std::copy(home_action.begin(), home_action.begin() + cfg_.chain.dof(), prev_action_.begin());

    history_.clear();
    history_.push_back({ball_.p, ball_.v});
    last_sensed_.reset();
    sense();
    record_trace("");
    return build_observation();
  }

  Observation reset(SeedBuffer& buffer) { return reset(buffer.pop()); }

  StepResult step(std::span<const double> action) {
    if (action.size() < static_cast<std::size_t>(kActionDim))
      throw std::invalid_argument("action must have 7 components");
    for (std::size_t i = 0; i < kActionDim; ++i)
      if (!std::isfinite(action[i])) throw NonFiniteAction("non-finite action component");
    if (done_) throw std::logic_error("step() after episode end; call reset()");

    StepResult res;
    StepInfo& info = res.info;

    if (state_ == TrajectoryState::T0) {
      apply_event({EventKind::launch, time(), ball_}, info);
    } else {
      state_ = auto_advance(state_);
    }

    const JointVector target = action_to_targets(cfg_.chain, action);
    const double h = cfg_.physics_dt();
    const int n = cfg_.chain.dof();
    for (int k = 0; k < cfg_.substeps && !done_; ++k) {
      const ChainPose before = pose_;
      const JointVector tau = pd_control(cfg_.chain, robot_.q, robot_.qd, target);
      for (int i = 0; i < n; ++i) {
        const auto& j = cfg_.chain.joints[i];
        info.torques[i] += std::abs(tau[i]) / cfg_.substeps;
        double qd = robot_.qd[i] + tau[i] / j.inertia * h;
        qd = std::clamp(qd, -j.qd_max, j.qd_max);
        double q = robot_.q[i] + qd * h;
        if (q < j.q_min || q > j.q_max) {
          q = std::clamp(q, j.q_min, j.q_max);
          qd = 0.0;
        }
        robot_.q[i] = q;
        robot_.qd[i] = qd;
      }
      pose_ = forward_kinematics(cfg_.chain, robot_.q, robot_.qd);
      advance_ball(before, h, info);
    }

    if (!done_ && time() >= cfg_.time_limit - 1e-12) terminate(TerminalReason::time_limit, info);

    info.undesired_contacts += link_table_contacts();
    const RewardFeatures f = features();
    info.stage_reward = stage_reward(state_, f, stage_, cfg_.reward);
    std::span<const double> act(action.data(), kActionDim);
    info.performance_reward =
        performance_reward(info.torques, act, prev_action_, info.undesired_contacts, cfg_.reward);
    std::copy(act.begin(), act.end(), prev_action_.begin());

    res.reward = total_reward(info.stage_reward, info.performance_reward);
    res.done = done_;
    episode_.steps += 1;
    episode_.total_reward += res.reward;

    history_.push_back({ball_.p, ball_.v});
    while (history_.size() > static_cast<std::size_t>(cfg_.noise.delay_max) + 1) history_.pop_front();
    info.ball_dropped = sense();
    res.obs = build_observation();
    record_trace(info.events.empty() ? "" : std::string(to_string(info.events.back().kind)));
    return res;
  }

  Observation build_observation() const {
    ObservationFields f;
    f.q = robot_.q;
    f.qd = robot_.qd;
    f.racket_position = pose_.racket.position;
    const auto& qt = pose_.racket.orientation;
    f.racket_orientation = {qt.w(), qt.x(), qt.y(), qt.z()};
    f.racket_velocity = pose_.racket.linear_velocity;
    f.ball_position = sensed_.p;
    f.ball_velocity = sensed_.v;
    f.target = target_;
    f.state_index = index_of(state_);
    f.continuous_state = continuous_onehot(state_);
    return pack(f);
  }

  RewardFeatures features() const {
    RewardFeatures f;
    f.racket_ball_distance = (pose_.racket.position - ball_.p).norm();
    const Vec3 tgt{target_[0], target_[1], cfg_.table.height};
    f.ball_target_distance = (ball_.p - tgt).norm();
    f.racket_hit_velocity_x = hit_velocity_x_;
    f.landing_error = episode_.landing_error;
    return f;
  }

  void write_trace_csv(std::ostream& os) const {
    os << "t,px,py,pz,vx,vy,vz,wx,wy,wz";
    for (int i = 0; i < kMaxJoints; ++i) os << ",q" << i;
    for (int i = 0; i < kMaxJoints; ++i) os << ",qd" << i;
    os << ",state,event\n";
    for (const auto& r : trace_) {
      os << r.t;
      for (const Vec3* v : {&r.ball.p, &r.ball.v, &r.ball.w})
        for (int i = 0; i < 3; ++i) os << ',' << (*v)[i];
      for (double x : r.q) os << ',' << x;
      for (double x : r.qd) os << ',' << x;
      os << ',' << to_string(r.state) << ',' << r.event << '\n';
    }
  }

 private:
  struct RacketHit {
    double fraction;
    Vec3 normal;
    Vec3 origin;
  };

  /// Swept test of the ball centre against the racket slab |d| <= r_b.
  std::optional<RacketHit> racket_sweep(const BallState& prev, const BallState& next,
                                        const RacketPose& r0, const RacketPose& r1) const {
    const Vec3 n = r1.normal();
    const double rb = cfg_.ball.radius;
    const Vec3 rel0 = prev.p - r0.position;
    const Vec3 rel1 = next.p - r1.position;
    const double d0 = rel0.dot(n);
    const double d1 = rel1.dot(n);
    double f = 0.0;
    if (d0 > rb) {
      if (d1 > rb) return std::nullopt;
      f = (d0 - rb) / (d0 - d1);
    } else if (d0 < -rb) {
      if (d1 < -rb) return std::nullopt;
      f = (-rb - d0) / (d1 - d0);
    }
    const Vec3 rel = rel0 + f * (rel1 - rel0);
    const Vec3 radial = rel - rel.dot(n) * n;
    if (radial.norm() > cfg_.chain.racket_radius) return std::nullopt;
    const Vec3 v = prev.v + f * (next.v - prev.v);
    const double side =
        d0 > 0.0 ? 1.0 : d0 < 0.0 ? -1.0 : ((v - r1.linear_velocity).dot(n) < 0.0 ? 1.0 : -1.0);
    const Vec3 face = side * n;
    if ((v - r1.linear_velocity).dot(face) >= 0.0) return std::nullopt;
    return RacketHit{f, face, r0.position + f * (r1.position - r0.position)};
  }

  bool body_touch(const Vec3& p) const {
    const double reach = cfg_.ball.radius + cfg_.chain.link_radius;
    const auto& pts = pose_.points;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      if (point_segment_distance(p, pts[i], pts[i + 1]) <= reach) return true;
    return false;
  }

  int link_table_contacts() const {
    int c = 0;
    const auto& g = cfg_.table;
    for (const auto& p : pose_.points)
      if (g.over_table(p.x(), p.y()) && p.z() < g.height + cfg_.chain.link_radius) ++c;
    return c;
  }

  /// Recorded balls do not penetrate the table; their bounce shows up as a
  /// reversal of vertical velocity close to the surface.
  std::optional<ClassifiedCrossing> classify_driven(const BallState& prev, const BallState& next) {
    auto c = classify_crossing(prev, next, cfg_.table, cfg_.ball.radius);
    const bool is_bounce = c && (c->kind == EventKind::bounce_robot_court ||
                                 c->kind == EventKind::bounce_opponent_court);
    const double clearance = next.p.z() - cfg_.ball.radius - cfg_.table.height;
    if (is_bounce) {
      driven_bounce_latch_ = true;
      return c;
    }
    if (driven_bounce_latch_) {
      if (clearance > 2.0 * kDrivenBounceClearance) driven_bounce_latch_ = false;
    } else if (auto k = driven_bounce(prev, next, cfg_.table, cfg_.ball.radius)) {
      driven_bounce_latch_ = true;
      if (!c) return ClassifiedCrossing{*k, 1.0};
    }
    return c;
  }

  void advance_ball(const ChainPose& before, double h, StepInfo& info) {
    const BallState prev = ball_;
    const double t0 = time();
    ++substep_count_;

    bool driven = driver_ && !driver_released_;
    BallState next;
    if (driven) {
      if (auto d = driver_(time())) {
        next = *d;
      } else {
        driven = false;
        driver_released_ = true;
      }
    }
    if (!driven) next = step_ball(prev, aero_, h, cfg_.flight);

    const auto hit = racket_sweep(prev, next, before.racket, pose_.racket);
    const auto cross = driven ? classify_driven(prev, next)
                              : classify_crossing(prev, next, cfg_.table, cfg_.ball.radius);

    if (hit && (!cross || hit->fraction <= cross->fraction)) {
      const BallState at = lerp(prev, next, hit->fraction);
      const SurfaceFrame frame{hit->origin, hit->normal, pose_.racket.linear_velocity};
      try {
        BallState post =
            resolve_racket_hit(at, frame, cfg_.chain.racket_radius, cfg_.racket_contact, cfg_.ball)
                .ball;
        post.w = clamp_spin(post.w, cfg_.flight.max_spin);
        driver_released_ = true;
        hit_velocity_x_ = frame.velocity.x();
        ball_ = step_ball(post, aero_, (1.0 - hit->fraction) * h, cfg_.flight);
        apply_event({EventKind::racket_contact, t0 + hit->fraction * h, post}, info);
        return;
      } catch (const NotApproaching&) {
      } catch (const OutsideRacket&) {
      }
    }

    if (cross) {
      const BallState at = lerp(prev, next, cross->fraction);
      const RallyEvent ev{cross->kind, t0 + cross->fraction * h, at};
      switch (cross->kind) {
        case EventKind::bounce_robot_court:
        case EventKind::bounce_opponent_court:
          if (driven) {
            ball_ = next;
          } else {
            const SurfaceFrame table{Vec3(at.p.x(), at.p.y(), cfg_.table.height), Vec3::UnitZ(),
                                     Vec3::Zero()};
            BallState post = resolve_bounce(at, table, cfg_.table_contact, cfg_.ball).ball;
            post.w = clamp_spin(post.w, cfg_.flight.max_spin);
            ball_ = step_ball(post, aero_, (1.0 - cross->fraction) * h, cfg_.flight);
          }
          if (cross->kind == EventKind::bounce_opponent_court && state_ == TrajectoryState::T23) {
            episode_.landing_error = std::hypot(at.p.x() - target_[0], at.p.y() - target_[1]);
          }
          break;
        case EventKind::net_crossed:
          ball_ = next;
          break;
        default:
          ball_ = at;  // ball leaves play here
          break;
      }
      apply_event(ev, info);
    } else {
      ball_ = next;
    }

    if (!done_ && body_touch(ball_.p)) {
      info.undesired_contacts += 1;
      apply_event({EventKind::body_contact, time(), ball_}, info);
    }
  }

  void apply_event(const RallyEvent& ev, StepInfo& info) {
    info.events.push_back(ev);
    episode_.events.push_back(ev);
    const Advance adv = advance_state(state_, ev.kind);
    if (const auto* term = std::get_if<Terminal>(&adv)) {
      terminate(term->reason, info);
      return;
    }
    state_ = std::get<TrajectoryState>(adv);
    if (state_ == TrajectoryState::T2) episode_.caught = true;
    if (state_ == TrajectoryState::T3) {
      episode_.returned = true;
      info.success = true;
      done_ = true;
    }
  }

  void terminate(TerminalReason r, StepInfo& info) {
    info.terminal = r;
    episode_.terminal = r;
    done_ = true;
  }

  bool sense() {
    const std::vector<BallSample> truth(history_.begin(), history_.end());
    const SensedBall s = sense_ball(truth, cfg_.noise, delay_, rng_, last_sensed_);
    sensed_ = s.sample;
    last_sensed_ = s.sample;
    return s.dropped;
  }

  void record_trace(std::string event) {
    if (!trace_on_) return;
    trace_.push_back({time(), ball_, robot_.q, robot_.qd, state_, std::move(event)});
  }

  ArenaConfig cfg_;
  Rng rng_;
  StageIndex stage_{1};
  RobotState robot_;
  ChainPose pose_;
  BallState ball_;
  AeroCoefficients aero_;
  TrajectoryState state_ = TrajectoryState::T0;
  bool done_ = false;
  long substep_count_ = 0;
  std::array<double, 2> target_{};
  int delay_ = 0;
  double hit_velocity_x_ = 0.0;
  std::array<double, kActionDim> prev_action_{};
  std::deque<BallSample> history_;
  std::optional<BallSample> last_sensed_;
  BallSample sensed_;
  EpisodeSummary episode_;
  BallDriver driver_;
  bool driver_released_ = false;
  bool driven_bounce_latch_ = false;
  bool trace_on_ = false;
  std::vector<TraceRow> trace_;
};

}  // namespace spinrally
