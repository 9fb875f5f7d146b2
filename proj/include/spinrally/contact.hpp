#pragma once

#include <cmath>

#include "spinrally/dynamics.hpp"
#include "spinrally/errors.hpp"

namespace spinrally {

struct ContactParams {
  double restitution = 0.93;       // e_n, normal restitution
  double sliding_friction = 0.25;  // mu_s
  double rolling_friction = 0.0;   // mu_r, reserved

  static ContactParams table() { return {0.93, 0.25, 0.0}; }
  static ContactParams racket() { return {0.82, 0.6, 0.0}; }
};

/// Integrated contact quantities. Linear and angular impulse are frame
/// independent; the two work terms are measured in the surface frame.
struct ImpulseRecord {
  Vec3 linear = Vec3::Zero();   // N s, integral of contact force over time
  Vec3 angular = Vec3::Zero();  // N m s, integral of contact torque about the centre
  double friction_work = 0.0;   // J dissipated by the contact force along the contact point's path
  double torque_work = 0.0;     // J dissipated by rolling resistance (zero while mu_r is reserved)
};

struct SurfaceFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 velocity = Vec3::Zero();  // zero for the table, end-effector velocity for the racket
};

struct ContactResult {
  BallState ball;
  ImpulseRecord impulse;
};

/// Expresses a ball state in the frame moving with the surface.
inline BallState to_surface_frame(const BallState& s, const SurfaceFrame& f) {
  return {s.p, s.v - f.velocity, s.w};
}

namespace detail {

/// Coulomb impulse contact against a static plane with unit normal n.
inline ContactResult bounce_static(const BallState& s, const Vec3& n, const ContactParams& cp,
                                   const BallProperties& props) {
  const double m = props.mass;
  const double r = props.radius;
  const double vn = s.v.dot(n);
  if (!(vn < 0.0)) throw NotApproaching();

  const double jn = -m * (1.0 + cp.restitution) * vn;
  const Vec3 arm = -r * n;  // centre to contact point
  const Vec3 slip = (s.v - vn * n) + s.w.cross(arm);

  // Tangential slip response per unit impulse: 1/m + r^2/I.
  const double compliance = 1.0 / m + r * r / props.inertia;
  const double slip_mag = slip.norm();
  Vec3 jt = Vec3::Zero();
  if (slip_mag > 0.0) {
    const double stick = slip_mag / compliance;
    const double limit = cp.sliding_friction * jn;
    jt = limit >= stick ? Vec3(-slip / compliance) : Vec3(-limit / slip_mag * slip);
  }
  const Vec3 slip_post = slip + compliance * jt;

  ContactResult out;
  out.impulse.linear = jn * n + jt;
  out.impulse.angular = arm.cross(jt);
  out.ball.p = s.p;
  out.ball.v = s.v - (1.0 + cp.restitution) * vn * n + jt / m;
  out.ball.w = s.w + out.impulse.angular / props.inertia;
  out.impulse.friction_work =
      0.5 * m * vn * vn * (1.0 - cp.restitution * cp.restitution) - 0.5 * jt.dot(slip + slip_post);
  out.impulse.torque_work = 0.0;
  return out;
}

}  // namespace detail

/// Resolves an impact of the ball against a planar surface. Throws
/// NotApproaching unless the ball moves into the surface.
inline ContactResult resolve_bounce(const BallState& s, const SurfaceFrame& frame,
                                    const ContactParams& cp, const BallProperties& props) {
  ContactResult out = detail::bounce_static(to_surface_frame(s, frame), frame.normal, cp, props);
  out.ball.v += frame.velocity;
  return out;
}

/// Racket impact. The racket is a disk of the given radius centred at
/// racket.origin and is treated as infinitely massive during the impulse.
inline ContactResult resolve_racket_hit(const BallState& s, const SurfaceFrame& racket,
                                        double racket_radius, const ContactParams& cp,
                                        const BallProperties& props) {
  const Vec3 rel = s.p - racket.origin;
  const Vec3 radial = rel - rel.dot(racket.normal) * racket.normal;
  if (radial.norm() > racket_radius) throw OutsideRacket();
  return resolve_bounce(s, racket, cp, props);
}

struct ConservationResidual {
  double energy = 0.0;            // J
  Vec3 momentum = Vec3::Zero();   // N s
};

/// Energy and momentum balance of a contact. pre/post must be expressed in the
/// surface frame (see to_surface_frame) for moving surfaces.
inline ConservationResidual verify_conservation(const BallState& pre, const BallState& post,
                                                const ImpulseRecord& rec,
                                                const BallProperties& props) {
  ConservationResidual out;
  out.energy = 0.5 * props.mass * (post.v.squaredNorm() - pre.v.squaredNorm()) +
               0.5 * props.inertia * (post.w.squaredNorm() - pre.w.squaredNorm()) +
               rec.friction_work + rec.torque_work;
  out.momentum = props.mass * (post.v - pre.v) - rec.linear;
  return out;
}

}  // namespace spinrally
