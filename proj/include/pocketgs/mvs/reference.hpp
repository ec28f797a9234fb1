#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/sfm/sparse_map.hpp"
#include "pocketgs/sfm/triangulation.hpp"

namespace pocketgs {

/// Search interval for the plane sweep. Hypotheses are uniformly spaced in
/// inverse depth; index 0 is d_min and n_hypotheses - 1 is d_max.
struct DepthRange {
  double d_min = 0.05;
  double d_max = 5.0;
  int n_hypotheses = 64;
  int support = 0;           // visible sparse points used
  bool fallback = false;     // range taken from the global scene range
  bool low_support = false;  // fewer than 20 but at least 5 visible points

  double inv_step() const { return (1.0 / d_min - 1.0 / d_max) / (n_hypotheses - 1); }
  double inv_depth(double k) const { return 1.0 / d_min - k * inv_step(); }
  double depth(double k) const { return 1.0 / inv_depth(k); }
  std::vector<double> hypotheses() const {
    std::vector<double> d(n_hypotheses);
    for (int k = 0; k < n_hypotheses; ++k) d[k] = depth(k);
    d.back() = d_max;
    return d;
  }
};

/// Nearest-rank quantile of an ascending array: element ceil(q n) (1-based).
inline double nearest_rank_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double r = std::ceil(q * static_cast<double>(sorted.size()));
  const std::size_t idx = static_cast<std::size_t>(std::clamp(r, 1.0, static_cast<double>(sorted.size()))) - 1;
  return sorted[idx];
}

/// Camera-z of every sparse point that lands inside camera `cam`'s image.
inline std::vector<double> visible_depths(const SparseMap& map, int cam) {
  std::vector<double> d;
  const PoseSE3& pose = map.poses[cam];
  const Intrinsics& k = map.intrinsics[cam];
  for (const Vec3& p : map.points) {
    const Vec3 pc = pose.apply(p);
    if (pc.z() <= kMinDepth) continue;
    if (!k.contains(k.project(pc))) continue;
    d.push_back(pc.z());
  }
  std::sort(d.begin(), d.end());
  return d;
}

inline DepthRange range_from_depths(const std::vector<double>& sorted, int n_hypotheses) {
  DepthRange r;
  r.n_hypotheses = n_hypotheses;
  r.d_min = 0.6 * nearest_rank_quantile(sorted, 0.05);
  r.d_max = 1.6 * nearest_rank_quantile(sorted, 0.95);
  r.support = static_cast<int>(sorted.size());
  return r;
}

/// Range pooled over every camera; [0.05, 5] m when the map is too sparse.
inline DepthRange global_depth_range(const SparseMap& map, int n_hypotheses) {
  std::vector<double> all;
  for (int c = 0; c < map.num_cameras(); ++c) {
    const auto d = visible_depths(map, c);
    all.insert(all.end(), d.begin(), d.end());
  }
  std::sort(all.begin(), all.end());
  DepthRange r;
  if (all.size() >= 5) r = range_from_depths(all, n_hypotheses);
  r.n_hypotheses = n_hypotheses;
  r.fallback = true;
  return r;
}

/// [0.6 q.05, 1.6 q.95] of the visible sparse depths in camera `cam`.
/// Fewer than 5 visible points switch to the global range; 5 to 19 are used
/// but flagged as low support.
inline DepthRange depth_range(int cam, const SparseMap& map, int n_hypotheses = 64) {
  const auto d = visible_depths(map, cam);
  if (d.size() < 5) return global_depth_range(map, n_hypotheses);
  DepthRange r = range_from_depths(d, n_hypotheses);
  r.low_support = d.size() < 20;
  return r;
}

struct ReferenceConfig {
  double b_target = 0.15;      // meters
  double sigma_b = 0.075;      // meters
  double alpha_min_deg = 3.0;
  double alpha_floor_deg = 1.0;
};

/// exp(-(b - b_target)^2 / (2 sigma_b^2)) * max(alpha / alpha_min, 1).
inline double reference_score(double baseline, double alpha_deg, const ReferenceConfig& cfg) {
  const double e = baseline - cfg.b_target;
  return std::exp(-e * e / (2.0 * cfg.sigma_b * cfg.sigma_b)) * std::max(alpha_deg / cfg.alpha_min_deg, 1.0);
}

struct ReferenceCandidate {
  int camera = -1;
  double score = 0;
  double baseline = 0;
  double alpha_deg = 0;
  int covisible = 0;
};

struct ReferenceChoice {
  int best = -1;  // camera index, -1 when no candidate clears the angle floor
  std::vector<ReferenceCandidate> top;  // up to three, best first
};

/// Mean triangulation angle (degrees) over points observed by both cameras.
inline ReferenceCandidate covisibility(const SparseMap& map, int a, int b) {
  ReferenceCandidate rc;
  rc.camera = b;
  const Vec3 ca = map.poses[a].center(), cb = map.poses[b].center();
  rc.baseline = (ca - cb).norm();
  std::vector<char> seen_a(map.points.size(), 0), seen_b(map.points.size(), 0);
  for (const auto& o : map.observations) {
    if (o.camera == a) seen_a[o.point] = 1;
    if (o.camera == b) seen_b[o.point] = 1;
  }
  double sum = 0;
  for (std::size_t j = 0; j < map.points.size(); ++j) {
    if (!seen_a[j] || !seen_b[j]) continue;
    sum += angle_between(map.points[j] - ca, map.points[j] - cb);
    ++rc.covisible;
  }
  if (rc.covisible > 0) rc.alpha_deg = sum / rc.covisible * 180.0 / std::numbers::pi;
  return rc;
}

/// Scores every candidate with co-visible points and an angle above the
/// floor; ties go to the smaller frame id.
inline ReferenceChoice select_reference(int target, const std::vector<int>& candidates, const SparseMap& map,
                                        const ReferenceConfig& cfg = {}) {
  std::vector<ReferenceCandidate> scored;
  for (int c : candidates) {
    if (c == target) continue;
    ReferenceCandidate rc = covisibility(map, target, c);
    if (rc.covisible == 0 || rc.alpha_deg < cfg.alpha_floor_deg) continue;
    rc.score = reference_score(rc.baseline, rc.alpha_deg, cfg);
    scored.push_back(rc);
  }
  std::stable_sort(scored.begin(), scored.end(), [&](const ReferenceCandidate& x, const ReferenceCandidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return map.frame_ids[x.camera] < map.frame_ids[y.camera];
  });
  ReferenceChoice out;
  if (!scored.empty()) out.best = scored.front().camera;
  for (std::size_t i = 0; i < scored.size() && i < 3; ++i) out.top.push_back(scored[i]);
  return out;
}

}  // namespace pocketgs
