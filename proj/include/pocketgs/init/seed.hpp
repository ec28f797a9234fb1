#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pocketgs/core/gaussian_model.hpp"
#include "pocketgs/core/json_io.hpp"
#include "pocketgs/core/parallel.hpp"
#include "pocketgs/core/point_cloud.hpp"
#include "pocketgs/init/knn.hpp"
#include "pocketgs/init/sym_eigen.hpp"

namespace pocketgs {

struct InitConfig {
  int k = 16;                  // neighbourhood for the covariance
  int k_scale = 3;             // neighbours averaged for the tangential scale
  double normal_ratio = 0.3;   // normal-axis scale / tangential scale
  double min_scale = 5e-4;     // meters
  double max_scale = 0.05;     // meters
  double opacity = 0.1;
  bool include_self = false;   // put p_i itself into its neighbourhood
  bool prior = true;           // false: isotropic distance-based seeds
};

struct SurfaceStats {
  Vec3 centroid = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  Vec3 eigenvalues = Vec3::Zero();  // ascending
  Vec3 normal = Vec3::UnitZ();
  double scale = 0.0;
  bool fallback = false;  // normal ill-defined
};

/// Statistics of point i over `neighbors` (sorted nearest first). The
/// normal is the smallest-eigenvalue eigenvector, flipped to face
/// `view_origin` when `has_view`.
inline SurfaceStats surface_stats(const std::vector<Vec3>& pts, int i, const std::vector<int>& neighbors,
                                  const InitConfig& cfg = {}, const Vec3& view_origin = Vec3::Zero(),
                                  bool has_view = false) {
  SurfaceStats s;
  std::vector<int> hood = neighbors;
  if (cfg.include_self) hood.insert(hood.begin(), i);

  const int ns = std::min<int>(cfg.k_scale, static_cast<int>(neighbors.size()));
  if (ns > 0) {
    double d = 0;
    for (int j = 0; j < ns; ++j) d += (pts[neighbors[j]] - pts[i]).norm();
    s.scale = std::clamp(d / ns, cfg.min_scale, cfg.max_scale);
  } else {
    s.scale = cfg.max_scale;  // isolated point: no spacing evidence
  }

  if (hood.empty()) {
    s.centroid = pts[i];
    s.fallback = true;
    return s;
  }
  for (int j : hood) s.centroid += pts[j];
  s.centroid /= static_cast<double>(hood.size());
  for (int j : hood) {
    const Vec3 d = pts[j] - s.centroid;
    s.covariance += d * d.transpose();
  }
  s.covariance /= static_cast<double>(hood.size());

  const SymEigen3 e = sym_eigen3(s.covariance);
  s.eigenvalues = e.values;
  s.normal = e.vectors.col(0);
  // Collinear or coincident neighbourhoods leave the normal undetermined.
  const double top = e.values[2];
  if (hood.size() < 2 || !(top > 0) || e.values[1] <= 1e-12 * top) {
    s.fallback = true;
    s.normal = Vec3::UnitZ();
    return s;
  }
  if (has_view && s.normal.dot(view_origin - pts[i]) < 0) s.normal = -s.normal;
  return s;
}

struct InitReport {
  std::size_t seeds = 0;
  std::size_t fallbacks = 0;
  bool prior = true;
  std::vector<std::string> warnings;
};

struct InitResult {
  GaussianModel model;
  std::vector<SurfaceStats> stats;
  InitReport report;
};

inline Vec3 color_logit(const Vec3& rgb) {
  Vec3 out;
  for (int c = 0; c < 3; ++c) out[c] = logit(std::clamp(rgb[c], 0.01, 0.99));
  return out;
}

/// One Gaussian per cloud point. With the prior, scales are (s, s, r s)
/// with the short axis on the surface normal; otherwise (and for fallback
/// points) an isotropic sphere of radius s.
inline InitResult seed_gaussians(const std::vector<DensePoint>& cloud, const InitConfig& cfg = {}) {
  InitResult res;
  res.report.prior = cfg.prior;
  const std::size_t n = cloud.size();
  if (n == 0) {
    res.report.warnings.push_back("empty point cloud, no Gaussians seeded");
    return res;
  }
  std::vector<Vec3> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = cloud[i].position;
  const int k_eff = std::min<int>(std::max(cfg.k, cfg.k_scale), static_cast<int>(n) - 1);
  if (static_cast<int>(n) <= cfg.k)
    res.report.warnings.push_back("only " + std::to_string(n) + " points for K = " + std::to_string(cfg.k) +
                                  ", using all other points as neighbours");

  const KdTree tree(pts);
  res.model.resize(n);
  res.stats.resize(n);
  const double a0 = logit(cfg.opacity);
  parallel_for(n, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    std::vector<int> nb = tree.knn(i, k_eff);
    std::vector<int> hood(nb.begin(), nb.begin() + std::min<int>(cfg.k, static_cast<int>(nb.size())));
    SurfaceStats s = surface_stats(pts, i, hood, cfg, cloud[i].view_origin, cloud[i].has_view);
    if (static_cast<int>(hood.size()) < cfg.k_scale) {
      // Scale neighbours may exceed the covariance neighbourhood.
      const int ns = std::min<int>(cfg.k_scale, static_cast<int>(nb.size()));
      if (ns > 0) {
        double d = 0;
        for (int j = 0; j < ns; ++j) d += (pts[nb[j]] - pts[i]).norm();
        s.scale = std::clamp(d / ns, cfg.min_scale, cfg.max_scale);
      }
    }
    const double ls = std::log(s.scale);
    Vec3 log_scale(ls, ls, ls);
    Vec4 q(1, 0, 0, 0);
    if (cfg.prior && !s.fallback) {
      log_scale[2] = std::log(cfg.normal_ratio * s.scale);
      q = shortest_arc_from_z(s.normal);
    }
    res.model.set_gaussian(ii, pts[i], log_scale, q, a0, color_logit(cloud[i].color));
    res.stats[ii] = s;
  });
  res.report.seeds = n;
  for (const auto& s : res.stats) res.report.fallbacks += s.fallback;
  return res;
}

inline json to_json(const InitReport& r) {
  return {{"seeds", r.seeds}, {"fallbacks", r.fallbacks}, {"prior", r.prior}, {"warnings", r.warnings}};
}

}  // namespace pocketgs
