#pragma once

#include <cmath>

#include "pocketgs/core/geometry.hpp"

namespace pocketgs {

using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

inline constexpr double kMinDepth = 1e-6;

/// Pose increment (omega, v), rotation first: R <- exp(omega) R, t <- t + v.
/// Translation is incremented directly so a gauge-fixed translation
/// component is carried through optimization bit for bit.
inline PoseSE3 retract(const PoseSE3& p, const Vec6& delta) {
  PoseSE3 out;
  out.rotation = so3_exp(delta.head<3>()) * p.rotation;
  out.translation = p.translation + delta.tail<3>();
  return out;
}

/// IRLS weight of the Huber loss at Mahalanobis residual norm `e`.
inline double huber_weight(double e, double delta) { return e <= delta ? 1.0 : delta / e; }

/// Huber loss of a squared residual norm s = e^2.
inline double huber_cost(double s, double delta) {
  return s <= delta * delta ? s : 2.0 * delta * std::sqrt(s) - delta * delta;
}

struct ResidualJacobian {
  Vec2 r = Vec2::Zero();
  Mat26 j_pose = Mat26::Zero();
  Mat23 j_point = Mat23::Zero();
  double weight = 0.0;
  bool valid = false;  // false when the point is not in front of the camera
};

/// r = project(pose, point) - observed, with Jacobians w.r.t. the pose
/// increment of `retract` and the world point. `weight` is the Huber IRLS
/// weight evaluated on the information-weighted residual norm.
inline ResidualJacobian residual_and_jacobian(const Vec2& observed, const PoseSE3& pose, const Vec3& point,
                                              const Intrinsics& k, double huber_delta,
                                              const Mat2& info = Mat2::Identity()) {
  ResidualJacobian out;
  const Vec3 rp = pose.rotation * point;
  const Vec3 pc = rp + pose.translation;
  if (pc.z() <= kMinDepth) return out;
  const double iz = 1.0 / pc.z();
  out.r = Vec2(k.fx * pc.x() * iz + k.cx, k.fy * pc.y() * iz + k.cy) - observed;
  Mat23 dproj;
  dproj << k.fx * iz, 0, -k.fx * pc.x() * iz * iz, 0, k.fy * iz, -k.fy * pc.y() * iz * iz;
  out.j_pose.leftCols<3>() = -dproj * skew(rp);
  out.j_pose.rightCols<3>() = dproj;
  out.j_point = dproj * pose.rotation;
  const double e = std::sqrt(std::max(0.0, out.r.dot(info * out.r)));
  out.weight = huber_weight(e, huber_delta);
  out.valid = true;
  return out;
}

}  // namespace pocketgs
