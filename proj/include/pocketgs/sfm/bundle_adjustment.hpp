#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pocketgs/core/json_io.hpp"
#include "pocketgs/sfm/normal_equations.hpp"
#include "pocketgs/sfm/triangulation.hpp"

namespace pocketgs {

struct BAConfig {
  double huber_delta = 2.0;  // pixels
  double lm_lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e10;
  int max_lm_iters = 20;
  int refinement_rounds = 3;
  double max_reproj_px = 2.0;
  double min_tri_angle_deg = 1.5;
};

struct BARoundLog {
  double cost_before = 0;
  double cost_after = 0;
  int accepted_steps = 0;
  int rejected_steps = 0;
  int points_before = 0;
  int points_after = 0;
  int observations_before = 0;
  int observations_after = 0;
  int removed_high_residual = 0;
  int removed_behind_camera = 0;
  int removed_points = 0;
};

struct BAReport {
  std::vector<BARoundLog> rounds;
  int gauge_axis = -1;
  bool diverged = false;
  std::vector<std::string> warnings;
};

struct BAResult {
  SparseMap map;
  BAReport report;
};

/// Sum of Huber-robustified squared Mahalanobis residuals over observations
/// in front of their camera; `invalid` counts the rest.
inline double robust_cost(const SparseMap& map, double huber_delta, int* invalid = nullptr) {
  double cost = 0;
  int bad = 0;
  for (const auto& o : map.observations) {
    const Vec3 pc = map.poses[o.camera].apply(map.points[o.point]);
    if (pc.z() <= kMinDepth) {
      ++bad;
      continue;
    }
    const Vec2 r = map.intrinsics[o.camera].project(pc) - o.pixel;
    cost += huber_cost(r.dot(o.info * r), huber_delta);
  }
  if (invalid) *invalid = bad;
  return cost;
}

inline double reprojection_error(const SparseMap& map, const Observation& o) {
  const Vec3 pc = map.poses[o.camera].apply(map.points[o.point]);
  if (pc.z() <= kMinDepth) return std::numeric_limits<double>::infinity();
  return (map.intrinsics[o.camera].project(pc) - o.pixel).norm();
}

inline SparseMap apply_update(const SparseMap& map, const SchurSolution& sol, const NormalEquations& ne) {
  SparseMap out = map;
  for (int c = 0; c < map.num_cameras(); ++c) {
    const auto& fixed = ne.camera_fixed[c];
    bool all_fixed = true;
    for (bool f : fixed) all_fixed = all_fixed && f;
    if (!all_fixed) out.poses[c] = retract(map.poses[c], sol.delta_t[c]);
  }
  for (int j = 0; j < map.num_points(); ++j) out.points[j] += sol.delta_p[j];
  return out;
}

struct LMStats {
  int accepted = 0;
  int rejected = 0;
  bool diverged = false;
};

/// Levenberg-Marquardt with Marquardt damping on the gauge-fixed system.
inline LMStats levenberg_marquardt(SparseMap& map, const BAConfig& cfg) {
  LMStats st;
  double lambda = cfg.lm_lambda0;
  int invalid = 0;
  double cost = robust_cost(map, cfg.huber_delta, &invalid);
  for (int it = 0; it < cfg.max_lm_iters; ++it) {
    if (cost <= 1e-24) break;
    const NormalEquations ne = fix_gauge(build_normal_equations(map, {cfg.huber_delta}), map.poses);
    double gmax = 0;
    for (const auto& b : ne.b_t) gmax = std::max(gmax, b.cwiseAbs().maxCoeff());
    for (const auto& b : ne.b_p) gmax = std::max(gmax, b.cwiseAbs().maxCoeff());
    if (gmax == 0.0) break;

    bool accepted = false;
    int failures_at_max = 0;
    bool stalled = false;
    while (!accepted) {
      const SchurSolution sol = schur_solve(ne, lambda);
      if (sol.ok) {
        SparseMap cand = apply_update(map, sol, ne);
        int cand_invalid = 0;
        const double cand_cost = robust_cost(cand, cfg.huber_delta, &cand_invalid);
        if (cand_invalid <= invalid && cand_cost < cost) {
          const double rel = (cost - cand_cost) / cost;
          map = std::move(cand);
          cost = cand_cost;
          invalid = cand_invalid;
          lambda = std::max(lambda * cfg.lambda_down, 1e-15);
          ++st.accepted;
          accepted = true;
          if (rel < 1e-15) stalled = true;
          break;
        }
        // No measurable change at maximal damping means converged, not diverged.
        if (lambda >= cfg.lambda_max && std::isfinite(cand_cost) && cand_cost <= cost * (1 + 1e-12)) {
          stalled = true;
          break;
        }
      }
      ++st.rejected;
      if (lambda >= cfg.lambda_max) {
        if (++failures_at_max >= 5) {
          st.diverged = true;
          break;
        }
      } else {
        lambda = std::min(lambda * cfg.lambda_up, cfg.lambda_max);
      }
    }
    if (st.diverged || stalled || !accepted) break;
  }
  return st;
}

/// Re-triangulates every point from its observations under the current
/// poses. Points that fail (angle or cheirality) are marked with NaN.
inline void retriangulate(SparseMap& map, double min_angle_deg) {
  std::vector<std::vector<TrackView>> views(map.num_points());
  for (const auto& o : map.observations)
    views[o.point].push_back({&map.poses[o.camera], &map.intrinsics[o.camera], o.pixel});
  std::vector<Vec3> pts(map.points.size());
  parallel_for(map.points.size(), [&](std::size_t j) {
    const Triangulation t = triangulate(views[j], min_angle_deg);
    pts[j] = t.ok() ? t.point : Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  });
  map.points = std::move(pts);
}

/// Outlier purification after a global step: drop observations with
/// residual above max_reproj_px or behind their camera, re-triangulate from
/// the survivors, then drop points that fail triangulation, exceed the mean
/// reprojection bound, or fall below the triangulation angle.
inline void purify(SparseMap& map, const BAConfig& cfg, BARoundLog& log) {
  std::vector<Observation> kept;
  for (const auto& o : map.observations) {
    const Vec3 pc = map.poses[o.camera].apply(map.points[o.point]);
    if (pc.z() <= kMinDepth) {
      ++log.removed_behind_camera;
      continue;
    }
    if ((map.intrinsics[o.camera].project(pc) - o.pixel).norm() > cfg.max_reproj_px) {
      ++log.removed_high_residual;
      continue;
    }
    kept.push_back(o);
  }
  map.observations = std::move(kept);
  const int before = map.num_points();
  map.compact();
  retriangulate(map, cfg.min_tri_angle_deg);

  std::vector<double> err_sum(map.points.size(), 0);
  std::vector<int> err_n(map.points.size(), 0);
  for (const auto& o : map.observations) {
    if (!map.points[o.point].allFinite()) continue;
    err_sum[o.point] += reprojection_error(map, o);
    ++err_n[o.point];
  }
  std::vector<Observation> obs;
  for (const auto& o : map.observations) {
    const int j = o.point;
    if (!map.points[j].allFinite() || err_n[j] == 0 || err_sum[j] / err_n[j] > cfg.max_reproj_px) continue;
    obs.push_back(o);
  }
  map.observations = std::move(obs);
  map.compact();
  log.removed_points = before - map.num_points();
}

/// Global bundle adjustment embedded in refinement rounds of
/// (LM, purification). Camera 0 and one translation component of camera 1
/// are held fixed.
inline BAResult run_global_ba(SparseMap map, const BAConfig& cfg = {}) {
  BAResult res;
  map.validate();
  for (int round = 0; round < cfg.refinement_rounds; ++round) {
    BARoundLog log;
    log.points_before = map.num_points();
    log.observations_before = static_cast<int>(map.observations.size());
    log.cost_before = robust_cost(map, cfg.huber_delta);
    if (map.num_points() == 0) {
      res.report.warnings.push_back("no points left to optimize");
      res.report.rounds.push_back(log);
      break;
    }
    const LMStats st = levenberg_marquardt(map, cfg);
    log.accepted_steps = st.accepted;
    log.rejected_steps = st.rejected;
    log.cost_after = robust_cost(map, cfg.huber_delta);
    if (st.diverged) {
      res.report.diverged = true;
      res.report.warnings.push_back("LM stopped at maximal damping in round " + std::to_string(round));
    }
    purify(map, cfg, log);
    log.points_after = map.num_points();
    log.observations_after = static_cast<int>(map.observations.size());
    res.report.rounds.push_back(log);
    if (st.diverged) break;
  }
  if (map.num_cameras() >= 2) {
    NormalEquations probe;
    probe.h_tt.resize(map.num_cameras());
    probe.camera_fixed.resize(map.num_cameras());
    try {
      res.report.gauge_axis = fix_gauge(probe, map.poses).gauge_axis;
    } catch (const GaugeError&) {
    }
  }
  res.map = std::move(map);
  return res;
}

inline json to_json(const BAReport& r) {
  json j;
  j["gauge_axis"] = r.gauge_axis;
  j["diverged"] = r.diverged;
  j["warnings"] = r.warnings;
  j["rounds"] = json::array();
  for (const auto& l : r.rounds)
    j["rounds"].push_back({{"cost_before", l.cost_before},
                           {"cost_after", l.cost_after},
                           {"accepted_steps", l.accepted_steps},
                           {"rejected_steps", l.rejected_steps},
                           {"points_before", l.points_before},
                           {"points_after", l.points_after},
                           {"observations_before", l.observations_before},
                           {"observations_after", l.observations_after},
                           {"removed_high_residual", l.removed_high_residual},
                           {"removed_behind_camera", l.removed_behind_camera},
                           {"removed_points", l.removed_points}});
  return j;
}

}  // namespace pocketgs
