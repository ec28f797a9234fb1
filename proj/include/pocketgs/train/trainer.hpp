#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/core/json_io.hpp"
#include "pocketgs/train/adam.hpp"
#include "pocketgs/train/loss.hpp"
#include "pocketgs/train/raster.hpp"

namespace pocketgs {

struct TrainConfig {
  int iterations = 500;
  AdamConfig adam;
  double lambda_ssim = 0.2;
  int kmax = 32;
  int tile = 16;
};

struct TrainView {
  const RgbImage* image = nullptr;
  PoseSE3 pose;
  Intrinsics intrinsics;
};

/// Everything one forward/backward pass produces for a single view.
struct RenderPass {
  std::vector<Splat2D> sorted;
  std::vector<int> canonical;  // canonical[sorted index]
  TileBins bins;
  RgbImage image;
};

inline RenderPass render_forward(const GaussianParams& p, const PoseSE3& pose, const Intrinsics& k, ReplayCache& cache,
                                 int kmax = 32, int tile = 16) {
  RenderPass r;
  const std::vector<Splat2D> visible = project(p, pose, k);
  const std::vector<int> pi = sort_by_depth(visible);
  r.sorted.reserve(pi.size());
  for (int i : pi) {
    r.sorted.push_back(visible[i]);
    r.canonical.push_back(visible[i].id);
  }
  r.bins = bin_splats(r.sorted, k.width, k.height, tile);
  cache.ensure(k.width, k.height, kmax);
  cache.reset_counters();
  r.image = rasterize_forward(r.sorted, r.bins, k.width, k.height, cache);
  return r;
}

inline RgbImage render(const GaussianParams& p, const PoseSE3& pose, const Intrinsics& k, int kmax = 32, int tile = 16) {
  ReplayCache cache;
  return render_forward(p, pose, k, cache, kmax, tile).image;
}

/// Backward of a render pass against dL/dC; accumulates into canonical
/// `grads` (which the caller zeroes).
inline void render_backward(const GaussianParams& p, const PoseSE3& pose, const Intrinsics& k, const RenderPass& r,
                            const ReplayCache& cache, const RgbImage& dl_dc, GaussianParams& grads) {
  const std::vector<Splat2DGrad> g2 = rasterize_backward(dl_dc, r.sorted, r.bins, cache);
  std::vector<ParamGrad> g3(r.sorted.size());
  parallel_for(r.sorted.size(), [&](std::size_t i) {
    g3[i] = backprop_projection(p, static_cast<std::size_t>(r.canonical[i]), pose, k, r.sorted[i], g2[i]);
  });
  scatter_gradients(g3, r.canonical, grads);
}

struct TrainLog {
  int iterations = 0;
  std::size_t gaussians = 0;
  std::vector<double> loss;
  std::vector<int> saturated;
  long skipped_updates = 0;
  double seconds = 0;
};

/// Fixed-budget optimization: one view per iteration, round-robin. The
/// Gaussian count never changes.
inline TrainLog train(GaussianModel& model, const std::vector<TrainView>& views, const TrainConfig& cfg,
                      const std::function<void(int, const GaussianModel&)>& on_iteration = {}) {
  TrainLog log;
  log.gaussians = model.size();
  if (cfg.iterations > 0 && views.empty()) throw std::invalid_argument("train: no views");
  const auto t0 = std::chrono::steady_clock::now();
  ReplayCache cache;
  GaussianParams grads;
  for (int it = 0; it < cfg.iterations; ++it) {
    const TrainView& v = views[static_cast<std::size_t>(it) % views.size()];
    const RenderPass pass = render_forward(model.params, v.pose, v.intrinsics, cache, cfg.kmax, cfg.tile);
    RgbImage dl;
    const LossValue loss = compute_loss(pass.image, *v.image, cfg.lambda_ssim, &dl);
    if (!std::isfinite(loss.total))
      throw std::runtime_error("non-finite loss at iteration " + std::to_string(it));
    grads.resize(model.size());
    render_backward(model.params, v.pose, v.intrinsics, pass, cache, dl, grads);
    log.skipped_updates += adam_step(model, grads, cfg.adam);
    log.loss.push_back(loss.total);
    log.saturated.push_back(cache.saturated_pixels());
    ++log.iterations;
    if (on_iteration) on_iteration(it, model);
  }
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

inline json to_json(const TrainLog& log, bool with_time = true) {
  json j = {{"iterations", log.iterations},
            {"gaussians", log.gaussians},
            {"loss", log.loss},
            {"saturated_pixels", log.saturated},
            {"skipped_updates", log.skipped_updates}};
  if (with_time) j["seconds"] = log.seconds;
  return j;
}

}  // namespace pocketgs
