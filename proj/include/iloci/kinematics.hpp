#pragma once

// Planar 4-revolute-joint arm standing in for the robot arm: it turns fitted
// pen positions in the y-z plane into joint-angle trajectories.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace iloci {

struct Point2 {
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.y - b.y, a.z - b.z); }

inline constexpr std::size_t kNumJoints = 4;
using JointAngles = std::array<double, kNumJoints>;

struct WorkspaceRect {
  std::pair<double, double> y_range{0.25, 0.65};
  std::pair<double, double> z_range{-0.20, 0.20};

  double width() const { return y_range.second - y_range.first; }
  double height() const { return z_range.second - z_range.first; }
  double diagonal() const { return std::hypot(width(), height()); }
  Point2 center() const { return {0.5 * (y_range.first + y_range.second), 0.5 * (z_range.first + z_range.second)}; }
  bool contains(Point2 p, double slack = 0.0) const {
    return p.y >= y_range.first - slack && p.y <= y_range.second + slack && p.z >= z_range.first - slack &&
           p.z <= z_range.second + slack;
  }
};

struct ArmModel {
  std::array<double, kNumJoints> link_lengths{0.30, 0.25, 0.20, 0.15};
  Point2 base{0.0, 0.0};
  std::array<std::pair<double, double>, kNumJoints> joint_limits{
      {{-std::numbers::pi, std::numbers::pi},
       {-std::numbers::pi, std::numbers::pi},
       {-std::numbers::pi, std::numbers::pi},
       {-std::numbers::pi, std::numbers::pi}}};
  // Seed for the first point of every trajectory; bent so the Jacobian is well conditioned.
  JointAngles home{-0.6, 0.9, 0.6, 0.3};

  double reach() const {
    double s = 0.0;
    for (double l : link_lengths) s += l;
    return s;
  }
  double mean_link() const { return reach() / kNumJoints; }
  double damping() const { return 0.1 * mean_link(); }
};

/// Throws ConfigError unless the workspace is non-degenerate and fully reachable.
inline void validate(const ArmModel& arm, const WorkspaceRect& ws) {
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    if (!(arm.link_lengths[i] > 0.0)) throw ConfigError("arm link lengths must be positive");
    if (!(arm.joint_limits[i].first < arm.joint_limits[i].second)) throw ConfigError("empty joint limit range");
  }
  if (!(ws.width() > 0.0) || !(ws.height() > 0.0)) throw ConfigError("workspace must have positive extent");
  double longest = 0.0;
  for (double l : arm.link_lengths) longest = std::max(longest, l);
  const double inner = std::max(0.0, 2.0 * longest - arm.reach());
  for (double y : {ws.y_range.first, ws.y_range.second}) {
    for (double z : {ws.z_range.first, ws.z_range.second}) {
      const double r = distance({y, z}, arm.base);
      if (r >= arm.reach() || r <= inner) throw ConfigError("workspace corner outside the reachable annulus");
    }
  }
  // The nearest point of the rectangle may be closer than any corner.
  const Point2 nearest{std::clamp(arm.base.y, ws.y_range.first, ws.y_range.second),
                       std::clamp(arm.base.z, ws.z_range.first, ws.z_range.second)};
  if (distance(nearest, arm.base) <= inner) throw ConfigError("workspace intersects the unreachable inner disc");
}

inline Point2 forward(const ArmModel& arm, const JointAngles& q) {
  Point2 p = arm.base;
  double angle = 0.0;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    angle += q[i];
    p.y += arm.link_lengths[i] * std::cos(angle);
    p.z += arm.link_lengths[i] * std::sin(angle);
  }
  return p;
}

inline Eigen::Matrix<double, 2, kNumJoints> jacobian(const ArmModel& arm, const JointAngles& q) {
  // Column j: sum over links i >= j of the derivative of link i's tip.
  std::array<double, kNumJoints> cum{};
  double angle = 0.0;
  for (std::size_t i = 0; i < kNumJoints; ++i) cum[i] = (angle += q[i]);
  Eigen::Matrix<double, 2, kNumJoints> J = Eigen::Matrix<double, 2, kNumJoints>::Zero();
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    for (std::size_t i = j; i < kNumJoints; ++i) {
      J(0, j) -= arm.link_lengths[i] * std::sin(cum[i]);
      J(1, j) += arm.link_lengths[i] * std::cos(cum[i]);
    }
  }
  return J;
}

struct IkOptions {
  double tolerance = 1e-6;
  int max_iterations = 200;
};

/// Damped least squares from q_init. Throws IkFailureError on non-convergence.
inline JointAngles inverse(const ArmModel& arm, Point2 target, const JointAngles& q_init, IkOptions opt = {}) {
  const double lambda2 = arm.damping() * arm.damping();
  JointAngles q = q_init;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Point2 p = forward(arm, q);
    const Eigen::Vector2d e(target.y - p.y, target.z - p.z);
    if (e.norm() < opt.tolerance) return q;
    if (it == opt.max_iterations) break;
    const auto J = jacobian(arm, q);
    const Eigen::Matrix2d JJt = J * J.transpose() + lambda2 * Eigen::Matrix2d::Identity();
    const Eigen::Vector<double, kNumJoints> dq = J.transpose() * JJt.ldlt().solve(e);
    for (std::size_t i = 0; i < kNumJoints; ++i)
      q[i] = std::clamp(q[i] + dq(static_cast<Eigen::Index>(i)), arm.joint_limits[i].first, arm.joint_limits[i].second);
  }
  throw IkFailureError("IK did not converge for target (" + std::to_string(target.y) + ", " +
                       std::to_string(target.z) + ")");
}

/// IK along a path, seeding each solve with the previous solution.
inline std::vector<JointAngles> solve_path(const ArmModel& arm, std::span<const Point2> path, IkOptions opt = {}) {
  std::vector<JointAngles> out;
  out.reserve(path.size());
  JointAngles seed = arm.home;
  for (const Point2& p : path) {
    seed = inverse(arm, p, seed, opt);
    out.push_back(seed);
  }
  return out;
}

}  // namespace iloci
