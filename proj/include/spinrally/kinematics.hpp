#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Geometry>

#include "spinrally/geometry.hpp"

namespace spinrally {

inline constexpr int kMaxJoints = 7;
inline constexpr int kActionDim = 7;

using JointVector = std::array<double, kMaxJoints>;

enum class JointType { prismatic, revolute };

struct JointSpec {
  JointType type = JointType::revolute;
  Vec3 axis = Vec3::UnitZ();     // in the joint frame
  Vec3 origin = Vec3::Zero();    // offset from the parent frame
  Vec3 rpy = Vec3::Zero();       // fixed rotation from the parent frame
  double q_min = -1.0, q_max = 1.0;
  double qd_max = 10.0;
  double tau_max = 1.0;
  double kp = 2.0, kd = 0.12;
  double inertia = 0.002;        // effective joint inertia for the PD loop
};

/// Serial chain ending in a racket disk whose face normal is the local +x axis
/// of the racket frame.
struct ChainSpec {
  Vec3 base_position{-1.55, 0.0, 0.76};
  Vec3 base_rpy = Vec3::Zero();
  std::vector<JointSpec> joints;
  Vec3 racket_offset{0.12, 0.0, 0.0};
  Vec3 racket_rpy = Vec3::Zero();
  double racket_radius = 0.085;
  double link_radius = 0.03;

  int dof() const { return static_cast<int>(joints.size()); }

  static JointSpec prismatic(Vec3 axis, double lo, double hi) {
    JointSpec j;
    j.type = JointType::prismatic;
    j.axis = axis;
    j.q_min = lo;
    j.q_max = hi;
    j.qd_max = 5.0;
    j.tau_max = 10.0;
    j.kp = 20.0;
    j.kd = 1.2;
    j.inertia = 0.02;
    return j;
  }

  static JointSpec revolute(Vec3 axis, double lo, double hi, Vec3 origin = Vec3::Zero()) {
    JointSpec j;
    j.type = JointType::revolute;
    j.axis = axis;
    j.origin = origin;
    j.q_min = lo;
    j.q_max = hi;
    j.qd_max = 15.0;
    j.tau_max = 1.0;
    j.kp = 2.0;
    j.kd = 0.12;
    j.inertia = 0.002;
    return j;
  }

  /// Rail (y), lift (z) and five revolute joints.
  static ChainSpec default7() {
    ChainSpec c;
    c.base_position = {-1.9, 0.0, 0.76};
    c.joints = {
        prismatic(Vec3::UnitY(), -0.8, 0.8),
        prismatic(Vec3::UnitZ(), 0.0, 0.5),
        revolute(Vec3::UnitZ(), -1.0, 1.0, {0.0, 0.0, 0.1}),
        revolute(Vec3::UnitY(), -1.0, 1.0),
        revolute(Vec3::UnitY(), -1.2, 1.2, {0.3, 0.0, 0.0}),
        revolute(Vec3::UnitX(), -1.5, 1.5, {0.25, 0.0, 0.0}),
        revolute(Vec3::UnitY(), -1.0, 1.0, {0.05, 0.0, 0.0}),
    };
    c.racket_offset = {0.1, 0.0, 0.0};
    return c;
  }

  /// Rail (y), lift (z), slide (x) and a racket pitch joint.
  static ChainSpec desk4() {
    ChainSpec c;
    c.base_position = {-1.55, 0.0, 0.76};
    c.joints = {
        prismatic(Vec3::UnitY(), -0.8, 0.8),
        prismatic(Vec3::UnitZ(), 0.05, 0.6),
        prismatic(Vec3::UnitX(), -0.35, 0.35),
        revolute(Vec3::UnitY(), -0.8, 0.8),
    };
    c.racket_offset = {0.12, 0.0, 0.0};
    return c;
  }

  JointVector home() const {
    JointVector q{};
    for (int i = 0; i < dof(); ++i) q[i] = 0.5 * (joints[i].q_min + joints[i].q_max);
    return q;
  }

  void validate() const {
    if (joints.empty() || dof() > kMaxJoints)
      throw std::invalid_argument("chain must have 1..7 joints");
    for (const auto& j : joints) {
      if (!(j.q_min < j.q_max) || j.inertia <= 0.0 || j.tau_max < 0.0 || j.qd_max <= 0.0)
        throw std::invalid_argument("invalid joint limits");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw std::invalid_argument("joint axis not unit");
    }
  }
};

inline Eigen::Quaterniond quat_from_rpy(const Vec3& rpy) {
  return Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
         Eigen::AngleAxisd(rpy.x(), Vec3::UnitX());
}

struct RacketPose {
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Vec3 linear_velocity = Vec3::Zero();

  Vec3 normal() const { return orientation * Vec3::UnitX(); }
};

struct ChainPose {
  RacketPose racket;
  std::vector<Vec3> points;  // base, joint origins, handle end; consecutive pairs are links
};

/// Racket pose by composing the per-joint transforms; linear velocity of the
/// racket centre is J(q) qd.
inline ChainPose forward_kinematics(const ChainSpec& chain, std::span<const double> q,
                                    std::span<const double> qd) {
  ChainPose out;
  Eigen::Quaterniond rot = quat_from_rpy(chain.base_rpy);
  Vec3 pos = chain.base_position;
  out.points.push_back(pos);

  std::array<Vec3, kMaxJoints> axis_world;
  std::array<Vec3, kMaxJoints> origin_world;
  for (int i = 0; i < chain.dof(); ++i) {
    const JointSpec& j = chain.joints[i];
    pos = pos + rot * j.origin;
    rot = rot * quat_from_rpy(j.rpy);
    axis_world[i] = rot * j.axis;
    origin_world[i] = pos;
    out.points.push_back(pos);
    if (j.type == JointType::prismatic) {
      pos = pos + axis_world[i] * q[i];
    } else {
      rot = rot * Eigen::AngleAxisd(q[i], j.axis);
    }
  }
  out.racket.position = pos + rot * chain.racket_offset;
  out.racket.orientation = (rot * quat_from_rpy(chain.racket_rpy)).normalized();

  Vec3 vel = Vec3::Zero();
  for (int i = 0; i < chain.dof(); ++i) {
    const Vec3 col = chain.joints[i].type == JointType::prismatic
                         ? axis_world[i]
                         : Vec3(axis_world[i].cross(out.racket.position - origin_world[i]));
    vel += col * qd[i];
  }
  out.racket.linear_velocity = vel;

  // Handle stops short of the racket face.
  out.points.push_back(out.racket.position - 0.5 * chain.racket_offset.norm() *
                                                 out.racket.normal());
  return out;
}

struct JointGains {
  double kp = 0.0, kd = 0.0, tau_max = 0.0;
};

/// tau = kp (q_target - q) - kd qd, clamped to +/- tau_max.
inline double pd_control(double q, double qd, double q_target, const JointGains& g) {
  const double tau = g.kp * (q_target - q) - g.kd * qd;
  return std::clamp(tau, -g.tau_max, g.tau_max);
}

inline JointVector pd_control(const ChainSpec& chain, std::span<const double> q,
                              std::span<const double> qd, std::span<const double> target) {
  JointVector tau{};
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints[i];
    tau[i] = pd_control(q[i], qd[i], target[i], {j.kp, j.kd, j.tau_max});
  }
  return tau;
}

/// Affine map of an action in [-1, 1] onto [q_min, q_max] per joint.
inline JointVector action_to_targets(const ChainSpec& chain, std::span<const double> action) {
  JointVector t{};
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints[i];
    const double a = std::clamp(action[i], -1.0, 1.0);
    t[i] = j.q_min + 0.5 * (a + 1.0) * (j.q_max - j.q_min);
  }
  return t;
}

inline JointVector targets_to_action(const ChainSpec& chain, std::span<const double> q) {
  JointVector a{};
  for (int i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints[i];
    a[i] = 2.0 * (q[i] - j.q_min) / (j.q_max - j.q_min) - 1.0;
  }
  return a;
}

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

}  // namespace spinrally
