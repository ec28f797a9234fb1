#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "pocketgs/core/gaussian_model.hpp"
#include "pocketgs/core/parallel.hpp"

namespace pocketgs {

inline constexpr double kNearPlane = 0.01;     // meters
inline constexpr double kFrustumMargin = 1.3;  // cull beyond 1.3x the half field of view
inline constexpr double kDilation = 0.3;       // pixel^2 added to cov2d
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMaxAlpha = 0.99;

struct Splat2D {
  int id = -1;  // canonical Gaussian index
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  Mat2 conic = Mat2::Identity();  // cov2d inverse
  double depth = 0;
  Vec3 color = Vec3::Zero();
  double alpha0 = 0;
  double radius = 0;  // pixels; alpha < 1/255 beyond
};

/// Fragment opacity of `s` at pixel center (px, py), before the 1/255 skip.
inline double splat_alpha(const Splat2D& s, double px, double py) {
  const double dx = px - s.mean2d.x(), dy = py - s.mean2d.y();
  const double power = -0.5 * (s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy);
  return std::min(kMaxAlpha, s.alpha0 * std::exp(power));
}

/// Fills conic and radius from cov2d and alpha0.
inline void set_footprint(Splat2D& s) {
  const Mat2& cov = s.cov2d;
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  s.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(0, 1) / det, cov(0, 0) / det;
  // alpha0 exp(-r^2 / (2 lambda_max)) < 1/255 beyond r.
  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double ratio = 255.0 * std::min(s.alpha0, kMaxAlpha);
  s.radius = ratio > 1.0 ? std::sqrt(2.0 * lmax * std::log(ratio)) : 0.0;
}

/// Projects Gaussian `i`. Returns false when culled (near plane, outside the
/// widened frustum, or a singular footprint).
inline bool project_one(const GaussianParams& p, std::size_t i, const PoseSE3& pose, const Intrinsics& k, Splat2D& s) {
  const Vec3 t = pose.apply(p.mean(i));
  if (t.z() <= kNearPlane) return false;
  const double lim_x = kFrustumMargin * 0.5 * k.width / k.fx, lim_y = kFrustumMargin * 0.5 * k.height / k.fy;
  const double nx = t.x() / t.z() + (k.cx - 0.5 * (k.width - 1)) / k.fx;
  const double ny = t.y() / t.z() + (k.cy - 0.5 * (k.height - 1)) / k.fy;
  if (std::abs(nx) > lim_x || std::abs(ny) > lim_y) return false;

  Eigen::Matrix<double, 2, 3> j;
  j << k.fx / t.z(), 0, -k.fx * t.x() / (t.z() * t.z()), 0, k.fy / t.z(), -k.fy * t.y() / (t.z() * t.z());
  const Eigen::Matrix<double, 2, 3> jw = j * pose.rotation;
  Mat2 cov = jw * p.covariance(i) * jw.transpose();
  cov(0, 0) += kDilation;
  cov(1, 1) += kDilation;
  cov(1, 0) = cov(0, 1);
  if (!(cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1) > 1e-12)) return false;

  s.id = static_cast<int>(i);
  s.mean2d = k.project(t);
  s.cov2d = cov;
  s.depth = t.z();
  s.color = p.rgb(i);
  s.alpha0 = p.alpha(i);
  set_footprint(s);
  return true;
}

/// Visible splats in canonical id order.
inline std::vector<Splat2D> project(const GaussianParams& p, const PoseSE3& pose, const Intrinsics& k) {
  const std::size_t n = p.size();
  std::vector<Splat2D> all(n);
  std::vector<char> keep(n, 0);
  parallel_for(n, [&](std::size_t i) { keep[i] = project_one(p, i, pose, k, all[i]); });
  std::vector<Splat2D> out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(all[i]);
  return out;
}

/// pi[sorted index] = position in `splats` (ascending depth, ties by id).
inline std::vector<int> sort_by_depth(const std::vector<Splat2D>& splats) {
  std::vector<int> pi(splats.size());
  std::iota(pi.begin(), pi.end(), 0);
  std::stable_sort(pi.begin(), pi.end(), [&](int a, int b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return splats[a].id < splats[b].id;
  });
  return pi;
}

/// Loss gradient with respect to one splat's screen-space quantities.
struct Splat2DGrad {
  Vec2 mean2d = Vec2::Zero();
  Mat2 conic = Mat2::Zero();  // w.r.t. the full 2x2 matrix, entries taken as independent
  Vec3 color = Vec3::Zero();
  double alpha0 = 0;

  Splat2DGrad& operator+=(const Splat2DGrad& o) {
    mean2d += o.mean2d;
    conic += o.conic;
    color += o.color;
    alpha0 += o.alpha0;
    return *this;
  }
};

/// Gradient of one Gaussian's 14 canonical parameters, layout as in
/// GaussianParams.
struct ParamGrad {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  double opacity = 0;
  Vec3 color = Vec3::Zero();
};

namespace detail {

// dR/dq_k of the rotation matrix of a unit quaternion (w, x, y, z).
inline std::array<Mat3, 4> rotation_partials(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (auto& m : d) m *= 2.0;
  return d;
}

}  // namespace detail

/// Chains a screen-space gradient back to Gaussian `i`'s parameters. Must be
/// given the same pose/intrinsics `s` was projected with.
inline ParamGrad backprop_projection(const GaussianParams& p, std::size_t i, const PoseSE3& pose, const Intrinsics& k,
                                     const Splat2D& s, const Splat2DGrad& g) {
  ParamGrad out;
  // Color and base opacity through their sigmoids.
  for (int c = 0; c < 3; ++c) out.color[c] = g.color[c] * s.color[c] * (1 - s.color[c]);
  out.opacity = g.alpha0 * s.alpha0 * (1 - s.alpha0);

  // conic = cov2d^-1  =>  dL/dcov2d = -Q G Q.
  const Mat2 gcov = -s.conic * g.conic * s.conic;

  const Vec3 t = pose.apply(p.mean(i));
  const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx * iz, 0, -k.fx * t.x() * iz2, 0, k.fy * iz, -k.fy * t.y() * iz2;
  const Mat3& w = pose.rotation;
  const Mat3 sigma = p.covariance(i);
  const Mat3 m = w * sigma * w.transpose();

  // cov2d = J M J^T with symmetric gcov.
  const Eigen::Matrix<double, 2, 3> gj = 2.0 * gcov * j * m;
  const Mat3 gsigma = (j * w).transpose() * gcov * (j * w);

  // Camera-space mean: through the projected center and through J.
  Vec3 gt;
  gt.x() = g.mean2d.x() * k.fx * iz + gj(0, 2) * (-k.fx * iz2);
  gt.y() = g.mean2d.y() * k.fy * iz + gj(1, 2) * (-k.fy * iz2);
  gt.z() = -g.mean2d.x() * k.fx * t.x() * iz2 - g.mean2d.y() * k.fy * t.y() * iz2 + gj(0, 0) * (-k.fx * iz2) +
           gj(0, 2) * (2 * k.fx * t.x() * iz3) + gj(1, 1) * (-k.fy * iz2) + gj(1, 2) * (2 * k.fy * t.y() * iz3);
  out.position = w.transpose() * gt;

  // Sigma = R diag(s^2) R^T.
  const Vec4 q = p.quat(i);
  const double qn = q.norm();
  const Vec4 qh = q / qn;
  const Mat3 r = quat_to_matrix(qh);
  const Vec3 sc = p.scale_log(i).array().exp();
  const Vec3 s2 = sc.array().square();
  const Mat3 local = r.transpose() * gsigma * r;
  for (int a = 0; a < 3; ++a) out.log_scale[a] = 2.0 * s2[a] * local(a, a);
  const Mat3 gr = 2.0 * gsigma * r * s2.asDiagonal();
  const auto dr = detail::rotation_partials(qh);
  Vec4 gqh;
  for (int a = 0; a < 4; ++a) gqh[a] = (gr.array() * dr[a].array()).sum();
  out.rotation = (gqh - qh * qh.dot(gqh)) / qn;
  return out;
}

}  // namespace pocketgs
