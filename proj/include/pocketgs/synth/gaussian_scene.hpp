#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pocketgs/core/gaussian_model.hpp"
#include "pocketgs/core/random.hpp"
#include "pocketgs/synth/ba_scene.hpp"
#include "pocketgs/train/trainer.hpp"

namespace pocketgs {

struct GaussianScene {
  GaussianModel truth;
  std::vector<PoseSE3> poses;
  Intrinsics intrinsics;
  std::vector<RgbImage> images;
};

struct GaussianSceneConfig {
  int n_views = 3;
  double arc_deg = 40.0;
  double radius = 2.5;  // camera distance from the box center
  int width = 64;
  int height = 48;
  double focal = 60;
  double min_scale = 0.04;
  double max_scale = 0.12;
};

/// Random Gaussians in the unit box [-0.5, 0.5]^3 seen from cameras on a
/// horizontal arc; images come from the reference rasterizer.
inline GaussianScene gen_gaussian_scene(int n, std::uint64_t seed, const GaussianSceneConfig& cfg = {}) {
  Rng rng(seed);
  GaussianScene s;
  s.truth.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 mu(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const Vec3 ls(std::log(rng.uniform(cfg.min_scale, cfg.max_scale)), std::log(rng.uniform(cfg.min_scale, cfg.max_scale)),
                  std::log(rng.uniform(cfg.min_scale, cfg.max_scale)));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q /= q.norm();
    const Vec3 col(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    s.truth.set_gaussian(static_cast<std::size_t>(i), mu, ls, q, rng.uniform(0.5, 3.0), col);
  }
  s.intrinsics = {cfg.focal, cfg.focal, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0, cfg.width, cfg.height};
  const double arc = cfg.arc_deg * std::numbers::pi / 180.0;
  for (int v = 0; v < cfg.n_views; ++v) {
    const double a = cfg.n_views == 1 ? 0.0 : -arc / 2 + arc * v / (cfg.n_views - 1);
    const Vec3 c(cfg.radius * std::sin(a), -0.3, -cfg.radius * std::cos(a));
    s.poses.push_back(look_at(c, Vec3::Zero()));
    s.images.push_back(render(s.truth.params, s.poses.back(), s.intrinsics));
  }
  return s;
}

}  // namespace pocketgs
