#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "pocketgs/core/geometry.hpp"
#include "pocketgs/sfm/reprojection.hpp"

namespace pocketgs {

struct TrackView {
  const PoseSE3* pose;
  const Intrinsics* intrinsics;
  Vec2 pixel;
};

enum class TriangulationStatus { Ok, TooFewViews, InsufficientAngle, BehindCamera, Degenerate };

struct Triangulation {
  TriangulationStatus status = TriangulationStatus::Degenerate;
  Vec3 point = Vec3::Zero();
  bool ok() const { return status == TriangulationStatus::Ok; }
};

inline Vec3 bearing_world(const TrackView& v) {
  const Intrinsics& k = *v.intrinsics;
  const Vec3 dir((v.pixel.x() - k.cx) / k.fx, (v.pixel.y() - k.cy) / k.fy, 1.0);
  return (v.pose->rotation.transpose() * dir).normalized();
}

inline double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

/// Largest pairwise angle (degrees) between rays from the camera centers to `x`.
inline double max_triangulation_angle_deg(const std::vector<TrackView>& views, const Vec3& x) {
  double best = 0;
  for (std::size_t a = 0; a < views.size(); ++a)
    for (std::size_t b = a + 1; b < views.size(); ++b)
      best = std::max(best, angle_between(x - views[a].pose->center(), x - views[b].pose->center()));
  return best * 180.0 / std::numbers::pi;
}

/// Linear (DLT) triangulation in normalized coordinates followed by one
/// Gauss-Newton step on pixel reprojection error.
inline Triangulation triangulate(const std::vector<TrackView>& views, double min_angle_deg) {
  Triangulation out;
  if (views.size() < 2) {
    out.status = TriangulationStatus::TooFewViews;
    return out;
  }
  double ray_angle = 0;
  for (std::size_t a = 0; a < views.size(); ++a)
    for (std::size_t b = a + 1; b < views.size(); ++b)
      ray_angle = std::max(ray_angle, angle_between(bearing_world(views[a]), bearing_world(views[b])));
  if (ray_angle * 180.0 / std::numbers::pi < min_angle_deg) {
    out.status = TriangulationStatus::InsufficientAngle;
    return out;
  }

  Eigen::MatrixXd a(2 * views.size(), 4);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Intrinsics& k = *views[i].intrinsics;
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = views[i].pose->rotation;
    p.col(3) = views[i].pose->translation;
    const double xn = (views[i].pixel.x() - k.cx) / k.fx;
    const double yn = (views[i].pixel.y() - k.cy) / k.fy;
    a.row(2 * i) = xn * p.row(2) - p.row(0);
    a.row(2 * i + 1) = yn * p.row(2) - p.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h[3]) < 1e-12) return out;
  Vec3 x = h.head<3>() / h[3];

  auto in_front = [&](const Vec3& p) {
    for (const auto& v : views)
      if (v.pose->apply(p).z() <= kMinDepth) return false;
    return true;
  };
  if (!in_front(x)) {
    out.status = TriangulationStatus::BehindCamera;
    return out;
  }

  auto sse = [&](const Vec3& p) {
    double s = 0;
    for (const auto& v : views) s += (v.intrinsics->project(v.pose->apply(p)) - v.pixel).squaredNorm();
    return s;
  };
  Mat3 jtj = Mat3::Zero();
  Vec3 jtr = Vec3::Zero();
  for (const auto& v : views) {
    const auto rj = residual_and_jacobian(v.pixel, *v.pose, x, *v.intrinsics, 1e300);
    jtj += rj.j_point.transpose() * rj.j_point;
    jtr += rj.j_point.transpose() * rj.r;
  }
  const Eigen::LDLT<Mat3> ldlt(jtj);
  if (ldlt.info() == Eigen::Success) {
    const Vec3 step = ldlt.solve(-jtr);
    if (step.allFinite() && in_front(x + step) && sse(x + step) < sse(x)) x += step;
  }
  if (max_triangulation_angle_deg(views, x) < min_angle_deg) {
    out.status = TriangulationStatus::InsufficientAngle;
    return out;
  }
  out.point = x;
  out.status = TriangulationStatus::Ok;
  return out;
}

}  // namespace pocketgs
