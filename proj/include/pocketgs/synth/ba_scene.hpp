#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <vector>

#include "pocketgs/core/random.hpp"
#include "pocketgs/sfm/map_init.hpp"

namespace pocketgs {

/// Camera looking from `center` toward `target`; image rows run along the
/// world direction `down` (right-handed, +z forward).
inline PoseSE3 look_at(const Vec3& center, const Vec3& target, const Vec3& down = Vec3(0, 1, 0)) {
  const Vec3 z = (target - center).normalized();
  const Vec3 x = down.cross(z).normalized();
  const Vec3 y = z.cross(x);
  PoseSE3 p;
  p.rotation.row(0) = x.transpose();
  p.rotation.row(1) = y.transpose();
  p.rotation.row(2) = z.transpose();
  p.translation = -(p.rotation * center);
  return p;
}

/// Ground truth for bundle adjustment: cameras on an arc around a point
/// cloud and exact (noise-free) tracks.
struct BAScene {
  std::vector<PoseSE3> poses;
  std::vector<Intrinsics> intrinsics;
  std::vector<Vec3> points;
  std::vector<std::vector<TrackObservation>> tracks;  // one per point
};

struct BASceneConfig {
  int cameras = 8;
  int points = 200;
  double radius = 2.5;       // camera distance to the cloud center
  double arc_deg = 60.0;     // total arc spanned by the cameras
  double cloud_half = 0.6;   // half extent of the point box
  Intrinsics k{500, 500, 319.5, 239.5, 640, 480};
};

inline BAScene gen_ba_scene(const BASceneConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  BAScene s;
  const double arc = cfg.arc_deg * std::numbers::pi / 180.0;
  for (int c = 0; c < cfg.cameras; ++c) {
    const double a = cfg.cameras == 1 ? 0.0 : -arc / 2 + arc * c / (cfg.cameras - 1);
    const Vec3 center(cfg.radius * std::sin(a), 0.1 * std::sin(3.0 * a), -cfg.radius * std::cos(a));
    s.poses.push_back(look_at(center, Vec3::Zero()));
    s.intrinsics.push_back(cfg.k);
  }
  while (static_cast<int>(s.points.size()) < cfg.points) {
    const Vec3 x(rng.uniform(-cfg.cloud_half, cfg.cloud_half), rng.uniform(-cfg.cloud_half, cfg.cloud_half),
                 rng.uniform(-cfg.cloud_half, cfg.cloud_half));
    std::vector<TrackObservation> track;
    for (int c = 0; c < cfg.cameras; ++c) {
      const Vec3 pc = s.poses[c].apply(x);
      if (pc.z() <= 0.1) continue;
      const Vec2 u = s.intrinsics[c].project(pc);
      if (!s.intrinsics[c].contains(u)) continue;
      track.push_back({c, u, -1});
    }
    if (track.size() < 2) continue;
    s.points.push_back(x);
    s.tracks.push_back(std::move(track));
  }
  return s;
}

/// Noisy inputs derived from a BAScene. Observations carry tag 1 when they
/// are planted outliers and 0 otherwise.
struct PerturbedBA {
  std::vector<PoseSE3> poses;
  std::vector<std::vector<TrackObservation>> tracks;
  int outliers = 0;
};

/// Left-multiplied twist noise on every pose (rotation sigma in degrees,
/// translation sigma in meters on the camera center) and `outlier_frac` of
/// observations displaced by 8 to 40 pixels in a random direction.
inline PerturbedBA perturb(const BAScene& s, double sigma_rot_deg, double sigma_t, double outlier_frac,
                           std::uint64_t seed) {
  Rng rng(seed);
  PerturbedBA out;
  const double sr = sigma_rot_deg * std::numbers::pi / 180.0;
  for (const PoseSE3& p : s.poses) {
    PoseSE3 q;
    const Vec3 w(rng.normal(0, sr), rng.normal(0, sr), rng.normal(0, sr));
    const Vec3 dc(rng.normal(0, sigma_t), rng.normal(0, sigma_t), rng.normal(0, sigma_t));
    q.rotation = so3_exp(w) * p.rotation;
    q.translation = -(q.rotation * (p.center() + dc));
    if (sigma_rot_deg == 0.0 && sigma_t == 0.0) q = p;
    out.poses.push_back(q);
  }
  out.tracks = s.tracks;
  for (auto& t : out.tracks)
    for (auto& o : t) {
      o.tag = 0;
      if (outlier_frac > 0 && rng.uniform() < outlier_frac) {
        const double ang = rng.uniform(0, 2 * std::numbers::pi), mag = rng.uniform(8, 40);
        o.pixel += mag * Vec2(std::cos(ang), std::sin(ang));
        o.tag = 1;
        ++out.outliers;
      }
    }
  return out;
}

struct PoseErrors {
  double rotation_rms = 0;  // radians
  double center_rms = 0;    // scene units after similarity alignment
  double scale = 1;
};

/// Aligns estimated camera centers to ground truth with a least-squares
/// similarity (Umeyama) and reports rotation and center RMS errors.
inline PoseErrors gauge_aligned_pose_error(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt) {
  const long n = static_cast<long>(est.size());
  Eigen::Matrix3Xd a(3, n), b(3, n);
  for (long i = 0; i < n; ++i) {
    a.col(i) = est[i].center();
    b.col(i) = gt[i].center();
  }
  const Mat4 t = Eigen::umeyama(a, b, true);
  const Mat3 sr = t.topLeftCorner<3, 3>();
  const double scale = std::cbrt(sr.determinant());
  const Mat3 r = sr / scale;
  PoseErrors e;
  e.scale = scale;
  for (long i = 0; i < n; ++i) {
    const Vec3 c = sr * a.col(i) + t.topRightCorner<3, 1>();
    e.center_rms += (c - b.col(i)).squaredNorm();
    // World rotation of the estimate mapped into the ground-truth frame.
    const Mat3 re = est[i].rotation * r.transpose();
    e.rotation_rms += std::pow(so3_log(re * gt[i].rotation.transpose()).norm(), 2);
  }
  e.center_rms = std::sqrt(e.center_rms / n);
  e.rotation_rms = std::sqrt(e.rotation_rms / n);
  return e;
}

}  // namespace pocketgs
