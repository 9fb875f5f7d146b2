#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "spinrally/dynamics.hpp"

namespace spinrally {

/// Rally cycle T0 -> T01 -> T1 -> T12 -> T2 -> T23 -> T3 -> T30 -> T0.
/// T0, T1, T2 and T3 are instantaneous (collisions), the others continuous.
enum class TrajectoryState : std::uint8_t { T0, T01, T1, T12, T2, T23, T3, T30 };

inline constexpr int kNumTrajectoryStates = 8;

inline constexpr int index_of(TrajectoryState s) { return static_cast<int>(s); }

inline constexpr bool is_instantaneous(TrajectoryState s) { return index_of(s) % 2 == 0; }

inline constexpr std::string_view to_string(TrajectoryState s) {
  constexpr std::array<std::string_view, 8> names{"T0", "T01", "T1", "T12",
                                                  "T2", "T23", "T3", "T30"};
  return names[index_of(s)];
}

/// Successor of an instantaneous state after its single control step.
inline constexpr TrajectoryState auto_advance(TrajectoryState s) {
  return is_instantaneous(s) ? static_cast<TrajectoryState>(index_of(s) + 1) : s;
}

enum class EventKind : std::uint8_t {
  launch,
  net_crossed,
  bounce_robot_court,
  bounce_opponent_court,
  racket_contact,
  body_contact,
  net_contact,
  floor_contact,
  out_of_bounds,
};

inline constexpr std::string_view to_string(EventKind k) {
  constexpr std::array<std::string_view, 9> names{
      "launch",         "net_crossed",  "bounce_robot_court", "bounce_opponent_court",
      "racket_contact", "body_contact", "net_contact",        "floor_contact",
      "out_of_bounds"};
  return names[static_cast<int>(k)];
}

struct RallyEvent {
  EventKind kind = EventKind::launch;
  double time = 0.0;
  BallState ball;

  bool operator==(const RallyEvent& o) const {
    return kind == o.kind && time == o.time && ball == o.ball;
  }
};

enum class TerminalReason : std::uint8_t {
  wrong_first_bounce,     // inbound ball bounced on the opponent court
  net_inbound,            // inbound ball hit the net
  missed_robot_court,     // inbound ball left play without bouncing
  volley,                 // racket touched the ball before the robot-court bounce
  double_bounce,          // second bounce on the robot court, never caught
  missed_ball,            // ball left play after the bounce, never caught
  own_court,              // returned ball bounced on the robot court
  net_return,             // returned ball hit the net
  missed_opponent_court,  // returned ball left play without landing
  double_hit,             // second racket contact
  body_contact,           // ball touched the robot body
  skipped_state,          // event would skip a state of the cycle
  time_limit,             // episode time limit, raised by the arena only
};

inline constexpr int kNumTerminalReasons = 13;

inline constexpr std::string_view to_string(TerminalReason r) {
  constexpr std::array<std::string_view, kNumTerminalReasons> names{
      "wrong_first_bounce", "net_inbound", "missed_robot_court", "volley",
      "double_bounce",      "missed_ball", "own_court",          "net_return",
      "missed_opponent_court", "double_hit", "body_contact",     "skipped_state",
      "time_limit"};
  return names[static_cast<int>(r)];
}

struct Terminal {
  TerminalReason reason;
  bool operator==(const Terminal&) const = default;
};

using Advance = std::variant<TrajectoryState, Terminal>;

/// Applies one rally event to the cycle. Events in an instantaneous state are
/// illegal (the state must auto-advance first), except the launch out of T0.
inline Advance advance_state(TrajectoryState cur, EventKind ev) {
  using S = TrajectoryState;
  using E = EventKind;
  using R = TerminalReason;
  if (ev == E::body_contact) return Terminal{R::body_contact};
  const bool leaves_play = ev == E::floor_contact || ev == E::out_of_bounds;
  switch (cur) {
    case S::T0:
      if (ev == E::launch) return S::T01;
      break;
    case S::T01:
      if (ev == E::net_crossed) return S::T01;
      if (ev == E::bounce_robot_court) return S::T1;
      if (ev == E::bounce_opponent_court) return Terminal{R::wrong_first_bounce};
      if (ev == E::net_contact) return Terminal{R::net_inbound};
      if (ev == E::racket_contact) return Terminal{R::volley};
      if (leaves_play) return Terminal{R::missed_robot_court};
      break;
    case S::T12:
      if (ev == E::racket_contact) return S::T2;
      if (ev == E::bounce_robot_court) return Terminal{R::double_bounce};
      if (leaves_play || ev == E::net_crossed || ev == E::net_contact)
        return Terminal{R::missed_ball};
      break;
    case S::T23:
      if (ev == E::net_crossed) return S::T23;
      if (ev == E::bounce_opponent_court) return S::T3;
      if (ev == E::bounce_robot_court) return Terminal{R::own_court};
      if (ev == E::net_contact) return Terminal{R::net_return};
      if (ev == E::racket_contact) return Terminal{R::double_hit};
      if (leaves_play) return Terminal{R::missed_opponent_court};
      break;
    case S::T30:
      if (ev == E::launch) return S::T0;
      break;
    default:
      break;
  }
  return Terminal{R::skipped_state};
}

/// Which robot parts touched the ball during the step, from the arena.
struct ContactFlags {
  bool racket = false;
  bool body = false;
};

struct ClassifiedCrossing {
  EventKind kind;
  double fraction;  // position along the step, in [0, 1]
};

/// Earliest geometric rally event between two consecutive ball positions:
/// table bounce (attributed to a court by the sign of x, x = 0 counts as the
/// opponent court), net contact or net crossing, floor contact, out of bounds.
inline std::optional<ClassifiedCrossing> classify_crossing(const BallState& prev,
                                                           const BallState& next,
                                                           const TableGeometry& geom,
                                                           double ball_radius) {
  std::optional<ClassifiedCrossing> best;
  auto consider = [&](EventKind k, double f) {
    if (!best || f < best->fraction) best = ClassifiedCrossing{k, f};
  };

  if (auto hit = detect_surface_crossing(prev.p, next.p, geom, ball_radius)) {
    const Vec3 at = prev.p + hit->fraction * (next.p - prev.p);
    switch (hit->surface) {
      case Surface::table:
        consider(at.x() < 0.0 ? EventKind::bounce_robot_court : EventKind::bounce_opponent_court,
                 hit->fraction);
        break;
      case Surface::net:
        consider(EventKind::net_contact, hit->fraction);
        break;
      case Surface::floor:
        consider(EventKind::floor_contact, hit->fraction);
        break;
    }
  }
  if (auto f = net_plane_fraction(prev.p, next.p)) {
    const Vec3 at = prev.p + *f * (next.p - prev.p);
    if (!hits_net(geom, at.y(), at.z(), ball_radius)) consider(EventKind::net_crossed, *f);
  }
  if (!best && (std::abs(next.p.x()) > geom.bounds || std::abs(next.p.y()) > geom.bounds)) {
    consider(EventKind::out_of_bounds, 1.0);
  }
  return best;
}

/// Classifies the transition between two consecutive integrator states that
/// span [t_next - dt, t_next]. Robot contacts reported by the arena take
/// precedence over geometric crossings.
inline std::optional<RallyEvent> classify_event(const BallState& prev, const BallState& next,
                                                const TableGeometry& geom, ContactFlags contacts,
                                                double t_next, double dt,
                                                double ball_radius = BallProperties{}.radius) {
  if (contacts.body) return RallyEvent{EventKind::body_contact, t_next, next};
  if (contacts.racket) return RallyEvent{EventKind::racket_contact, t_next, next};
  if (auto c = classify_crossing(prev, next, geom, ball_radius)) {
    return RallyEvent{c->kind, t_next - (1.0 - c->fraction) * dt, lerp(prev, next, c->fraction)};
  }
  return std::nullopt;
}

/// Kinematically driven (recorded) balls never penetrate the table; a bounce
/// shows up as a downward-to-upward flip of v_z close to the surface.
inline constexpr double kDrivenBounceClearance = 0.05;  // m above the resting height

inline std::optional<EventKind> driven_bounce(const BallState& prev, const BallState& next,
                                              const TableGeometry& geom, double ball_radius) {
  const double clearance = next.p.z() - ball_radius - geom.height;
  if (prev.v.z() < 0.0 && next.v.z() >= 0.0 && clearance < kDrivenBounceClearance &&
      geom.over_table(next.p.x(), next.p.y()))
    return next.p.x() < 0.0 ? EventKind::bounce_robot_court : EventKind::bounce_opponent_court;
  return std::nullopt;
}

/// A valid inbound rally: launch, then a net crossing, then the first surface
/// contact on the robot court. Later events are not inspected.
inline bool is_valid_rally(std::span<const RallyEvent> events) {
  if (events.empty() || events.front().kind != EventKind::launch) return false;
  bool crossed = false;
  for (std::size_t i = 1; i < events.size(); ++i) {
    switch (events[i].kind) {
      case EventKind::net_crossed:
        crossed = true;
        break;
      case EventKind::bounce_robot_court:
        return crossed;
      default:
        return false;
    }
  }
  return false;
}

}  // namespace spinrally
