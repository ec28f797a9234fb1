#pragma once

// Dense reference constructions shared by the BA unit tests and the
// acceptance gate. They build the full Jacobian row by row and solve with a
// generic dense factorization, sharing nothing with the block code beyond
// the per-observation residual model.

#include <Eigen/Dense>

#include <vector>

#include "pocketgs/sfm/bundle_adjustment.hpp"
#include "pocketgs/synth/ba_scene.hpp"

namespace oracle {

using namespace pocketgs;

struct DenseSystem {
  Eigen::MatrixXd h;
  Eigen::VectorXd b;
};

inline DenseSystem dense_normal_equations(const SparseMap& map, double huber_delta) {
  const int nc = map.num_cameras(), np = map.num_points();
  const int n = 6 * nc + 3 * np;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * map.observations.size(), n);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(2 * map.observations.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * map.observations.size(), 2 * map.observations.size());
  for (std::size_t i = 0; i < map.observations.size(); ++i) {
    const Observation& o = map.observations[i];
    const auto rj = residual_and_jacobian(o.pixel, map.poses[o.camera], map.points[o.point], map.intrinsics[o.camera],
                                          huber_delta, o.info);
    if (!rj.valid) continue;
    j.block(2 * i, 6 * o.camera, 2, 6) = rj.j_pose;
    j.block(2 * i, 6 * nc + 3 * o.point, 2, 3) = rj.j_point;
    r.segment<2>(2 * i) = rj.r;
    w.block<2, 2>(2 * i, 2 * i) = rj.weight * o.info;
  }
  return {j.transpose() * w * j, -(j.transpose() * w * r)};
}

/// Solves the Marquardt-damped full system with the gauge unknowns removed.
/// Returns the stacked (camera..., point...) update with zeros at fixed slots.
inline Eigen::VectorXd dense_solve(const DenseSystem& sys, const NormalEquations& gauge, double lambda) {
  const int n = static_cast<int>(sys.b.size());
  std::vector<int> keep;
  for (int k = 0; k < n; ++k) {
    const bool is_cam = k < 6 * gauge.num_cameras();
    if (is_cam && gauge.camera_fixed[k / 6][k % 6]) continue;
    keep.push_back(k);
  }
  const int m = static_cast<int>(keep.size());
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd rhs(m);
  for (int x = 0; x < m; ++x) {
    rhs[x] = sys.b[keep[x]];
    for (int y = 0; y < m; ++y) a(x, y) = sys.h(keep[x], keep[y]);
    const double d = a(x, x);
    a(x, x) = d + lambda * std::max(d, 1e-12);
  }
  const Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
  for (int x = 0; x < m; ++x) full[keep[x]] = sol[x];
  return full;
}

inline Eigen::VectorXd stack(const SchurSolution& s) {
  Eigen::VectorXd v(6 * s.delta_t.size() + 3 * s.delta_p.size());
  for (std::size_t c = 0; c < s.delta_t.size(); ++c) v.segment<6>(6 * c) = s.delta_t[c];
  for (std::size_t j = 0; j < s.delta_p.size(); ++j) v.segment<3>(6 * s.delta_t.size() + 3 * j) = s.delta_p[j];
  return v;
}

/// Small random BA instance with nonzero residuals.
inline SparseMap random_instance(Rng& rng, int max_cams = 5, int max_points = 20) {
  BASceneConfig cfg;
  cfg.cameras = 2 + static_cast<int>(rng.index(max_cams - 1));
  cfg.points = 1 + static_cast<int>(rng.index(max_points));
  const BAScene s = gen_ba_scene(cfg, rng.bits());
  const PerturbedBA p = perturb(s, 0.5, 0.01, 0.0, rng.bits());
  SparseMap m;
  m.poses = p.poses;
  m.intrinsics = s.intrinsics;
  for (int c = 0; c < cfg.cameras; ++c) m.frame_ids.push_back(c);
  for (std::size_t j = 0; j < s.points.size(); ++j) {
    m.points.push_back(s.points[j] + Vec3(rng.normal(0, 0.01), rng.normal(0, 0.01), rng.normal(0, 0.01)));
    for (const auto& o : p.tracks[j]) {
      Observation ob;
      ob.camera = o.camera;
      ob.point = static_cast<int>(j);
      ob.pixel = o.pixel + Vec2(rng.normal(0, 3), rng.normal(0, 3));
      m.observations.push_back(ob);
    }
  }
  return m;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  return (a - ref).norm() / std::max(ref.norm(), 1e-300);
}

}  // namespace oracle
