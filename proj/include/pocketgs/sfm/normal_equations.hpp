#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pocketgs/core/parallel.hpp"
#include "pocketgs/sfm/reprojection.hpp"
#include "pocketgs/sfm/sparse_map.hpp"

namespace pocketgs {

/// Block form of H delta = b for the pose/point partition. H_tt is
/// block-diagonal (one 6x6 per camera) because every observation touches a
/// single camera; H_tp holds one 6x3 block per observed (camera, point) pair.
struct NormalEquations {
  struct Coupling {
    int camera = 0;
    int point = 0;
    Mat63 block = Mat63::Zero();
  };

  std::vector<Mat6> h_tt;
  std::vector<Mat3> h_pp;
  std::vector<Coupling> h_tp;  // sorted by (point, camera)
  std::vector<Vec6> b_t;
  std::vector<Vec3> b_p;
  std::vector<std::array<bool, 6>> camera_fixed;
  std::vector<char> point_active;  // has at least one valid observation
  int gauge_axis = -1;             // fixed translation axis of camera 1, -1 if ungauged

  int num_cameras() const { return static_cast<int>(h_tt.size()); }
  int num_points() const { return static_cast<int>(h_pp.size()); }
};

struct NormalEquationsOptions {
  double huber_delta = 2.0;
};

/// Accumulates J^T W J and -J^T W r over observations in index order, with
/// W = huber_weight * info. Observations in front of no camera are skipped.
inline NormalEquations build_normal_equations(const SparseMap& map, const NormalEquationsOptions& opt = {}) {
  NormalEquations ne;
  const int nc = map.num_cameras(), np = map.num_points();
  ne.h_tt.assign(nc, Mat6::Zero());
  ne.h_pp.assign(np, Mat3::Zero());
  ne.b_t.assign(nc, Vec6::Zero());
  ne.b_p.assign(np, Vec3::Zero());
  ne.camera_fixed.assign(nc, {false, false, false, false, false, false});
  ne.point_active.assign(np, 0);

  std::vector<ResidualJacobian> rj(map.observations.size());
  parallel_for(map.observations.size(), [&](std::size_t i) {
    const Observation& o = map.observations[i];
    rj[i] = residual_and_jacobian(o.pixel, map.poses[o.camera], map.points[o.point], map.intrinsics[o.camera],
                                  opt.huber_delta, o.info);
  });

  std::map<std::pair<int, int>, Mat63> coupling;
  for (std::size_t i = 0; i < map.observations.size(); ++i) {
    if (!rj[i].valid) continue;
    const Observation& o = map.observations[i];
    const Mat2 w = rj[i].weight * o.info;
    const Eigen::Matrix<double, 6, 2> jtw = rj[i].j_pose.transpose() * w;
    const Eigen::Matrix<double, 3, 2> ptw = rj[i].j_point.transpose() * w;
    ne.h_tt[o.camera] += jtw * rj[i].j_pose;
    ne.h_pp[o.point] += ptw * rj[i].j_point;
    ne.b_t[o.camera] -= jtw * rj[i].r;
    ne.b_p[o.point] -= ptw * rj[i].r;
    auto [it, inserted] = coupling.try_emplace({o.point, o.camera}, Mat63::Zero());
    it->second += jtw * rj[i].j_point;
    ne.point_active[o.point] = 1;
  }
  ne.h_tp.reserve(coupling.size());
  for (const auto& [key, block] : coupling) ne.h_tp.push_back({key.second, key.first, block});
  return ne;
}

class GaugeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixes all six unknowns of camera 0 and the translation component of
/// camera 1 along the dominant axis of the 0->1 baseline, expressed in
/// camera 1's frame (the frame its translation lives in). Idempotent.
inline NormalEquations fix_gauge(NormalEquations ne, const std::vector<PoseSE3>& poses) {
  if (poses.size() < 2 || ne.num_cameras() < 2) throw GaugeError("gauge fixing needs at least two keyframes");
  const Vec3 baseline = poses[1].rotation * (poses[0].center() - poses[1].center());
  if (baseline.norm() < 1e-9)
    throw GaugeError("first two keyframes are coincident; dominant baseline axis is undefined");
  int axis = 0;
  baseline.cwiseAbs().maxCoeff(&axis);
  ne.camera_fixed[0] = {true, true, true, true, true, true};
  ne.camera_fixed[1][3 + axis] = true;
  ne.gauge_axis = axis;
  return ne;
}

struct SchurSolution {
  bool ok = false;  // false: reduced system not positive definite, raise damping
  std::vector<Vec6> delta_t;
  std::vector<Vec3> delta_p;
};

/// Marquardt damping of a diagonal entry.
inline double damp_diagonal(double h, double lambda) { return h + lambda * std::max(h, 1e-12); }

/// Reduced camera system after eliminating every point block:
///   S = H_tt - H_tp H_pp^-1 H_pt,  rhs = b_t - H_tp H_pp^-1 b_p,
/// restricted to the free camera unknowns. `var` maps (6 * camera + k) to a
/// row of S, or -1 for gauge-fixed unknowns.
struct ReducedSystem {
  bool ok = false;  // false: a damped H_pp block is not positive definite
  Eigen::MatrixXd s;
  Eigen::VectorXd rhs;
  std::vector<int> var;
  std::vector<Mat3> hpp_inv;
};

inline ReducedSystem reduce_camera_system(const NormalEquations& ne, double lambda) {
  ReducedSystem rs;
  const int nc = ne.num_cameras(), np = ne.num_points();
  rs.var.assign(6 * nc, -1);
  int m = 0;
  for (int c = 0; c < nc; ++c)
    for (int k = 0; k < 6; ++k)
      if (!ne.camera_fixed[c][k]) rs.var[6 * c + k] = m++;
  const std::vector<int>& var = rs.var;

  rs.hpp_inv.assign(np, Mat3::Zero());
  std::vector<char> inv_ok(np, 1);
  parallel_for(static_cast<std::size_t>(np), [&](std::size_t j) {
    if (!ne.point_active[j]) return;
    Mat3 h = ne.h_pp[j];
    for (int k = 0; k < 3; ++k) h(k, k) = damp_diagonal(h(k, k), lambda);
    Eigen::LLT<Mat3> llt(h);
    if (llt.info() != Eigen::Success) {
      inv_ok[j] = 0;
      return;
    }
    rs.hpp_inv[j] = llt.solve(Mat3::Identity());
    if (!rs.hpp_inv[j].allFinite()) inv_ok[j] = 0;
  });
  for (int j = 0; j < np; ++j)
    if (!inv_ok[j]) return rs;

  Eigen::MatrixXd& s = rs.s;
  Eigen::VectorXd& rhs = rs.rhs;
  s = Eigen::MatrixXd::Zero(m, m);
  rhs = Eigen::VectorXd::Zero(m);
  for (int c = 0; c < nc; ++c)
    for (int a = 0; a < 6; ++a) {
      const int ia = var[6 * c + a];
      if (ia < 0) continue;
      rhs[ia] = ne.b_t[c][a];
      for (int b = 0; b < 6; ++b) {
        const int ib = var[6 * c + b];
        if (ib < 0) continue;
        s(ia, ib) = a == b ? damp_diagonal(ne.h_tt[c](a, a), lambda) : ne.h_tt[c](a, b);
      }
    }

  // Couplings are grouped by point; eliminate one point at a time in index
  // order so the accumulation order is fixed.
  for (std::size_t lo = 0; lo < ne.h_tp.size();) {
    std::size_t hi = lo;
    const int j = ne.h_tp[lo].point;
    while (hi < ne.h_tp.size() && ne.h_tp[hi].point == j) ++hi;
    const Mat3& hinv = rs.hpp_inv[j];
    const Vec3 hinv_b = hinv * ne.b_p[j];
    for (std::size_t x = lo; x < hi; ++x) {
      const auto& cx = ne.h_tp[x];
      const Mat63 wx = cx.block * hinv;
      const Vec6 rx = cx.block * hinv_b;
      for (int a = 0; a < 6; ++a) {
        const int ia = var[6 * cx.camera + a];
        if (ia >= 0) rhs[ia] -= rx[a];
      }
      for (std::size_t y = lo; y < hi; ++y) {
        const auto& cy = ne.h_tp[y];
        const Mat6 blk = wx * cy.block.transpose();
        for (int a = 0; a < 6; ++a) {
          const int ia = var[6 * cx.camera + a];
          if (ia < 0) continue;
          for (int b = 0; b < 6; ++b) {
            const int ib = var[6 * cy.camera + b];
            if (ib >= 0) s(ia, ib) -= blk(a, b);
          }
        }
      }
    }
    lo = hi;
  }
  rs.ok = true;
  return rs;
}

/// Solves the damped system H delta = b through the reduced camera system
/// (dense Cholesky) and per-point back-substitution
///   delta_p = H_pp^-1 (b_p - H_pt delta_t).
inline SchurSolution schur_solve(const NormalEquations& ne, double lambda) {
  SchurSolution sol;
  const int nc = ne.num_cameras(), np = ne.num_points();
  const ReducedSystem rs = reduce_camera_system(ne, lambda);
  if (!rs.ok) return sol;
  const long m = rs.s.rows();

  Eigen::VectorXd dt = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(rs.s);
    if (llt.info() != Eigen::Success) return sol;
    dt = llt.solve(rs.rhs);
    if (!dt.allFinite()) return sol;
  }

  sol.delta_t.assign(nc, Vec6::Zero());
  for (int c = 0; c < nc; ++c)
    for (int k = 0; k < 6; ++k)
      if (rs.var[6 * c + k] >= 0) sol.delta_t[c][k] = dt[rs.var[6 * c + k]];

  std::vector<std::size_t> first(np + 1, ne.h_tp.size());
  for (std::size_t x = ne.h_tp.size(); x-- > 0;) first[ne.h_tp[x].point] = x;
  sol.delta_p.assign(np, Vec3::Zero());
  parallel_for(static_cast<std::size_t>(np), [&](std::size_t j) {
    if (!ne.point_active[j]) return;
    Vec3 r = ne.b_p[j];
    for (std::size_t x = first[j]; x < ne.h_tp.size() && ne.h_tp[x].point == static_cast<int>(j); ++x)
      r -= ne.h_tp[x].block.transpose() * sol.delta_t[ne.h_tp[x].camera];
    sol.delta_p[j] = rs.hpp_inv[j] * r;
  });
  sol.ok = true;
  return sol;
}

}  // namespace pocketgs
