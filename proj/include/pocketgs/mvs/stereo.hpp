#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pocketgs/core/frame.hpp"
#include "pocketgs/core/parallel.hpp"
#include "pocketgs/mvs/reference.hpp"

namespace pocketgs {

/// Per-pixel census codes. Bit b (row-major over the window, center
/// skipped) is set iff that neighbour is strictly darker than the center.
/// Pixels whose window leaves the image are invalid.
struct CensusImage {
  int width = 0;
  int height = 0;
  int window = 7;
  std::vector<std::uint64_t> code;
  std::vector<char> valid;

  int bits() const { return window * window - 1; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

inline std::uint64_t census(const GrayImage& luma, int x, int y, int window = 7) {
  const int r = window / 2;
  const double c = luma(x, y);
  std::uint64_t bits = 0;
  int b = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (dx == 0 && dy == 0) continue;
      if (luma(x + dx, y + dy) < c) bits |= std::uint64_t{1} << b;
      ++b;
    }
  return bits;
}

inline CensusImage census_transform(const GrayImage& luma, int window = 7) {
  if (window < 3 || window > 7 || window % 2 == 0) throw std::invalid_argument("census window must be 3, 5 or 7");
  CensusImage ci;
  ci.width = luma.width;
  ci.height = luma.height;
  ci.window = window;
  ci.code.assign(luma.pixel_count(), 0);
  ci.valid.assign(luma.pixel_count(), 0);
  const int r = window / 2;
  parallel_for(static_cast<std::size_t>(luma.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    if (y < r || y >= luma.height - r) return;
    for (int x = r; x < luma.width - r; ++x) {
      ci.code[ci.index(x, y)] = census(luma, x, y, window);
      ci.valid[ci.index(x, y)] = 1;
    }
  });
  return ci;
}

/// W x H x D integer costs, hypothesis-fastest layout.
struct CostVolume {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<double> hypotheses;  // meters
  std::vector<std::int32_t> cost;
  // Per pixel: every hypothesis landed on a valid reference code. Empty
  // means unknown (all pixels usable).
  std::vector<char> covered;

  CostVolume() = default;
  CostVolume(int w, int h, int d) : width(w), height(h), depth(d), cost(static_cast<std::size_t>(w) * h * d, 0) {}

  std::size_t index(int x, int y, int k) const { return (static_cast<std::size_t>(y) * width + x) * depth + k; }
  std::int32_t& at(int x, int y, int k) { return cost[index(x, y, k)]; }
  std::int32_t at(int x, int y, int k) const { return cost[index(x, y, k)]; }
};

/// Target pixel (x, y) at camera-z `d`, transformed into the reference image
/// and rounded to the nearest pixel. Returns false when the warp leaves the
/// reference image or lands behind it.
inline bool warp_pixel(int x, int y, double d, const Intrinsics& kt, const PoseSE3& target_to_ref,
                       const Intrinsics& kr, int& rx, int& ry) {
  const Vec3 pr = target_to_ref.apply(kt.backproject(x, y, d));
  if (pr.z() <= kMinDepth) return false;
  const Vec2 u = kr.project(pr);
  if (!kr.contains(u)) return false;
  rx = static_cast<int>(std::lround(u.x()));
  ry = static_cast<int>(std::lround(u.y()));
  return true;
}

/// Census plane sweep of `target` against `reference` over the hypotheses of
/// `range`. Invalid target pixels and warps that miss a valid reference code
/// cost the full bit count and clear the pixel's `covered` flag.
inline CostVolume plane_sweep(const CensusImage& target, const Intrinsics& kt, const PoseSE3& pose_t,
                              const CensusImage& reference, const Intrinsics& kr, const PoseSE3& pose_r,
                              const DepthRange& range) {
  CostVolume vol(target.width, target.height, range.n_hypotheses);
  vol.hypotheses = range.hypotheses();
  const PoseSE3 t2r = pose_r * pose_t.inverse();
  const std::int32_t max_cost = target.bits();
  vol.covered.assign(static_cast<std::size_t>(target.width) * target.height, 0);
  parallel_for(static_cast<std::size_t>(target.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < target.width; ++x) {
      const bool tv = target.valid[target.index(x, y)];
      const std::uint64_t tc = target.code[target.index(x, y)];
      bool all = tv;
      for (int k = 0; k < vol.depth; ++k) {
        std::int32_t c = max_cost;
        int rx = 0, ry = 0;
        if (tv && warp_pixel(x, y, vol.hypotheses[k], kt, t2r, kr, rx, ry) && reference.valid[reference.index(rx, ry)])
          c = std::popcount(tc ^ reference.code[reference.index(rx, ry)]);
        else
          all = false;
        vol.at(x, y, k) = c;
      }
      vol.covered[target.index(x, y)] = all;
    }
  });
  return vol;
}

namespace detail {

// One SGM pass along a scanline of `n` pixels. `at(i)` returns the index of
// the i-th pixel's first cost. Accumulates L_r into `out`.
template <typename At>
void sgm_scan(const CostVolume& vol, int n, At at, std::int32_t p1, std::int32_t p2, std::vector<std::int32_t>& out) {
  const int d = vol.depth;
  std::vector<std::int32_t> prev(d), cur(d);
  for (int i = 0; i < n; ++i) {
    const std::size_t base = at(i);
    if (i == 0) {
      for (int k = 0; k < d; ++k) cur[k] = vol.cost[base + k];
    } else {
      const std::int32_t m = *std::min_element(prev.begin(), prev.end());
      for (int k = 0; k < d; ++k) {
        std::int32_t best = prev[k];
        if (k > 0) best = std::min(best, prev[k - 1] + p1);
        if (k + 1 < d) best = std::min(best, prev[k + 1] + p1);
        best = std::min(best, m + p2);
        cur[k] = vol.cost[base + k] + best - m;
      }
    }
    for (int k = 0; k < d; ++k) out[base + k] += cur[k];
    std::swap(prev, cur);
  }
}

}  // namespace detail

/// Four-path (left, right, up, down) semi-global aggregation; the result is
/// the sum of the path costs.
inline CostVolume sgm_aggregate(const CostVolume& vol, std::int32_t p1 = 6, std::int32_t p2 = 96) {
  CostVolume out(vol.width, vol.height, vol.depth);
  out.hypotheses = vol.hypotheses;
  out.covered = vol.covered;
  const int w = vol.width, h = vol.height;
  // Each row (column) pass writes only its own pixels, so the passes can run
  // in parallel; the four directions are summed in a fixed order.
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
    detail::sgm_scan(vol, w, [&](int i) { return vol.index(i, static_cast<int>(y), 0); }, p1, p2, out.cost);
    detail::sgm_scan(vol, w, [&](int i) { return vol.index(w - 1 - i, static_cast<int>(y), 0); }, p1, p2, out.cost);
  });
  parallel_for(static_cast<std::size_t>(w), [&](std::size_t x) {
    detail::sgm_scan(vol, h, [&](int i) { return vol.index(static_cast<int>(x), i, 0); }, p1, p2, out.cost);
    detail::sgm_scan(vol, h, [&](int i) { return vol.index(static_cast<int>(x), h - 1 - i, 0); }, p1, p2, out.cost);
  });
  return out;
}

/// Per-pixel depth (meters, 0 = invalid) and confidence in [0, 1].
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<double> confidence;
  int camera = -1;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0), confidence(depth) {}
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  int valid_count() const {
    return static_cast<int>(std::count_if(depth.begin(), depth.end(), [](double d) { return d > 0; }));
  }
};

/// Winner-take-all with a parabola fit in inverse depth. Confidence is
/// 1 - c_best / c_second where c_second is the lowest cost outside the
/// winner and its two neighbours. Pixels below `conf_thresh` are invalid, as
/// are pixels not covered at every hypothesis: part of their depth range was
/// never compared, so the winner may be a spurious match.
inline DepthMap extract_depth(const CostVolume& agg, const DepthRange& range, double conf_thresh = 0.4) {
  DepthMap dm(agg.width, agg.height);
  const int n = agg.depth;
  parallel_for(static_cast<std::size_t>(agg.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < agg.width; ++x) {
      const std::int32_t* c = &agg.cost[agg.index(x, y, 0)];
      int kb = 0;
      for (int k = 1; k < n; ++k)
        if (c[k] < c[kb]) kb = k;
      std::int32_t second = std::numeric_limits<std::int32_t>::max();
      for (int k = 0; k < n; ++k)
        if (k < kb - 1 || k > kb + 1) second = std::min(second, c[k]);
      double conf = 0.0;
      if (second != std::numeric_limits<std::int32_t>::max() && second > 0)
        conf = std::clamp(1.0 - static_cast<double>(c[kb]) / second, 0.0, 1.0);
      double kf = kb;
      if (kb > 0 && kb + 1 < n) {
        const double a = c[kb - 1], b = c[kb], e = c[kb + 1];
        const double den = a - 2 * b + e;
        if (den > 0) kf += std::clamp(0.5 * (a - e) / den, -0.5, 0.5);
      }
      const std::size_t i = dm.index(x, y);
      dm.confidence[i] = conf;
      const bool covered = agg.covered.empty() || agg.covered[i];
      if (covered && conf >= conf_thresh) dm.depth[i] = std::clamp(range.depth(kf), range.d_min, range.d_max);
    }
  });
  return dm;
}

}  // namespace pocketgs
