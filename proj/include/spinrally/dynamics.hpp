#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "spinrally/geometry.hpp"

namespace spinrally {

/// Ball kinematic state in the table frame (robot on -x, opponent on +x, z up).
struct BallState {
  Vec3 p = Vec3::Zero();  // m
  Vec3 v = Vec3::Zero();  // m/s
  Vec3 w = Vec3::Zero();  // rad/s

  bool finite() const { return p.allFinite() && v.allFinite() && w.allFinite(); }
  bool operator==(const BallState& o) const { return p == o.p && v == o.v && w == o.w; }
};

/// Per-trajectory force coefficients: drag k_d [1/m] and Magnus k_m [s].
struct AeroCoefficients {
  double k_d = 0.0;
  double k_m = 0.0;

  bool operator==(const AeroCoefficients&) const = default;
};

struct BallProperties {
  double mass = 2.7e-3;     // kg
  double radius = 0.02;     // m
  double inertia = 7.2e-7;  // kg m^2

  /// Thin-walled sphere: I = 2/3 m r^2.
  static BallProperties hollow(double mass, double radius) {
    return {mass, radius, 2.0 / 3.0 * mass * radius * radius};
  }
};

struct FlightOptions {
  Vec3 gravity = kGravity;
  double max_spin = 600.0;   // rad/s, clamp on |w|
  double spin_decay = 0.0;   // 1/s, exponential spin decay; 0 disables it
};

/// Gravity, quadratic drag and Magnus lift: g - k_d |v| v + k_m (w x v).
inline Vec3 aero_accel(const BallState& s, const AeroCoefficients& a, const Vec3& g = kGravity) {
  return g - a.k_d * s.v.norm() * s.v + a.k_m * s.w.cross(s.v);
}

inline Vec3 clamp_spin(const Vec3& w, double max_spin) {
  const double n = w.norm();
  if (n > max_spin && n > 0.0) return w * (max_spin / n);
  return w;
}

/// One semi-implicit Euler step. dt == 0 returns the input unchanged.
inline BallState step_ball(const BallState& s, const AeroCoefficients& a, double dt,
                           const FlightOptions& opt = {}) {
  if (dt == 0.0) return s;
  BallState out;
  out.v = s.v + aero_accel(s, a, opt.gravity) * dt;
  out.p = s.p + out.v * dt;
  out.w = opt.spin_decay > 0.0 ? Vec3(s.w * std::exp(-opt.spin_decay * dt)) : s.w;
  out.w = clamp_spin(out.w, opt.max_spin);
  return out;
}

inline BallState lerp(const BallState& a, const BallState& b, double f) {
  return {a.p + f * (b.p - a.p), a.v + f * (b.v - a.v), a.w + f * (b.w - a.w)};
}

struct FlightSample {
  double t = 0.0;
  BallState ball;
};

struct SurfaceEvent {
  Surface surface = Surface::table;
  double t = 0.0;
  BallState ball;
};

struct FlightResult {
  std::vector<FlightSample> samples;
  std::optional<SurfaceEvent> event;
};

/// Integrates free flight until the ball touches the table, net or floor, or
/// until t_max elapses. Sample 0 is the initial state.
inline FlightResult simulate_flight(const BallState& s0, const AeroCoefficients& a, double dt,
                                    double t_max, const TableGeometry& geom,
                                    double ball_radius = BallProperties{}.radius,
                                    const FlightOptions& opt = {}) {
  FlightResult out;
  out.samples.push_back({0.0, s0});
  BallState s = s0;
  double t = 0.0;
  const auto steps = static_cast<long>(std::ceil(t_max / dt - 1e-9));
  for (long k = 0; k < steps; ++k) {
    const BallState next = step_ball(s, a, dt, opt);
    if (auto hit = detect_surface_crossing(s.p, next.p, geom, ball_radius)) {
      out.event = SurfaceEvent{hit->surface, t + hit->fraction * dt, lerp(s, next, hit->fraction)};
      return out;
    }
    s = next;
    t = (k + 1) * dt;
    out.samples.push_back({t, s});
  }
  return out;
}

}  // namespace spinrally
