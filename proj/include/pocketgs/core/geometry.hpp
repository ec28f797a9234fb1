#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <string>

namespace pocketgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole camera. Pixel (u, v) has its center at integer coordinates.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height;
  }

  Vec2 project(const Vec3& pc) const { return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy}; }

  /// Camera-space point at camera-z `depth` through pixel (u, v).
  Vec3 backproject(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }

  bool contains(const Vec2& p) const {
    return p.x() >= -0.5 && p.y() >= -0.5 && p.x() < width - 0.5 && p.y() < height - 0.5;
  }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Rodrigues exponential of an axis-angle vector.
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-12) return Mat3::Identity() + k;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

inline Vec3 so3_log(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

/// Rigid world-to-camera transform: x_cam = rotation * x_world + translation.
/// Right-handed, +z forward.
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static PoseSE3 identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  PoseSE3 inverse() const {
    PoseSE3 out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  PoseSE3 operator*(const PoseSE3& o) const {
    PoseSE3 out;
    out.rotation = rotation * o.rotation;
    out.translation = rotation * o.translation + translation;
    return out;
  }

  /// Camera center in world coordinates.
  Vec3 center() const { return -(rotation.transpose() * translation); }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Validates a 4x4 matrix as SE(3) within `tol` and projects the rotation
  /// block to the nearest proper rotation. Throws GeometryError otherwise.
  static PoseSE3 from_matrix(const Mat4& m, double tol = 1e-4) {
    const Mat3 r = m.topLeftCorner<3, 3>();
    if (!m.allFinite()) throw GeometryError("pose matrix has non-finite entries");
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      throw GeometryError("rotation block is not orthonormal");
    if (std::abs(r.determinant() - 1.0) > tol)
      throw GeometryError("rotation block has determinant " + std::to_string(r.determinant()));
    if ((m.bottomRows<1>() - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > tol)
      throw GeometryError("bottom row is not (0, 0, 0, 1)");
    PoseSE3 p;
    p.rotation = orthonormalize(r);
    p.translation = m.topRightCorner<3, 1>();
    return p;
  }

  static Mat3 orthonormalize(const Mat3& r) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
    return u * v.transpose();
  }
};

/// Rotation taking +z onto `n` along the shortest arc, as a unit (w, x, y, z)
/// quaternion.
inline Vec4 shortest_arc_from_z(const Vec3& n) {
  const Vec3 z(0, 0, 1);
  const double d = z.dot(n);
  if (d < -1.0 + 1e-12) return {0.0, 1.0, 0.0, 0.0};  // half turn about x
  const Vec3 c = z.cross(n);
  Vec4 q(1.0 + d, c.x(), c.y(), c.z());
  return q / q.norm();
}

/// Rotation matrix of a unit (w, x, y, z) quaternion.
inline Mat3 quat_to_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Vec4 matrix_to_quat(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0) out = -out;
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace pocketgs
