#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pocketgs/core/image.hpp"
#include "pocketgs/core/parallel.hpp"
#include "pocketgs/train/projection.hpp"

namespace pocketgs {

inline constexpr double kMinTransmittance = 1e-4;

struct CacheEntry {
  int index = 0;  // sorted splat index
  double c_in[3] = {0, 0, 0};
  double alpha = 0;
};

/// Per-pixel replay trace. Only `count[p]` leading entries of pixel p are
/// meaningful; anything after them is stale and never read.
struct ReplayCache {
  int width = 0;
  int height = 0;
  int kmax = 32;
  std::vector<CacheEntry> entries;
  std::vector<int> count;
  std::vector<char> saturated;

  void ensure(int w, int h, int k) {
    if (w == width && h == height && k == kmax && !count.empty()) return;
    width = w;
    height = h;
    kmax = k;
    entries.assign(static_cast<std::size_t>(w) * h * k, CacheEntry{});
    count.assign(static_cast<std::size_t>(w) * h, 0);
    saturated.assign(count.size(), 0);
  }
  /// What an iteration clears: O(WH) counters, not the entries.
  void reset_counters() {
    std::fill(count.begin(), count.end(), 0);
    std::fill(saturated.begin(), saturated.end(), 0);
  }
  /// Full clear, for comparison only.
  void clear_all() {
    std::fill(entries.begin(), entries.end(), CacheEntry{});
    reset_counters();
  }
  CacheEntry* pixel(int x, int y) { return &entries[(static_cast<std::size_t>(y) * width + x) * kmax]; }
  const CacheEntry* pixel(int x, int y) const { return &entries[(static_cast<std::size_t>(y) * width + x) * kmax]; }
  int saturated_pixels() const { return static_cast<int>(std::count(saturated.begin(), saturated.end(), 1)); }
};

/// One compositing step: C_out = C_in (1 - a) + a c.
inline double blend(double c_in, double a, double c) { return c_in * (1.0 - a) + a * c; }

struct BlendGrad {
  Vec3 c_in;
  double alpha;
  Vec3 color;
};

/// Gradients of one blend step given dL/dC_out.
inline BlendGrad blend_backward(const Vec3& g_out, const Vec3& c_in, double a, const Vec3& c) {
  return {g_out * (1.0 - a), g_out.dot(c - c_in), g_out * a};
}

/// Sorted splat indices overlapping each tile, ascending.
struct TileBins {
  int tile = 16;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::vector<int>> lists;
};

inline TileBins bin_splats(const std::vector<Splat2D>& sorted, int width, int height, int tile) {
  if (tile <= 0) throw std::invalid_argument("tile size must be positive");
  TileBins b;
  b.tile = tile;
  b.tiles_x = (width + tile - 1) / tile;
  b.tiles_y = (height + tile - 1) / tile;
  b.lists.resize(static_cast<std::size_t>(b.tiles_x) * b.tiles_y);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Splat2D& s = sorted[i];
    if (s.radius <= 0) continue;
    const double x0 = std::ceil(s.mean2d.x() - s.radius), x1 = std::floor(s.mean2d.x() + s.radius);
    const double y0 = std::ceil(s.mean2d.y() - s.radius), y1 = std::floor(s.mean2d.y() + s.radius);
    if (x1 < 0 || y1 < 0 || x0 > width - 1 || y0 > height - 1 || x0 > x1 || y0 > y1) continue;
    const int tx0 = static_cast<int>(std::max(0.0, x0)) / tile, tx1 = static_cast<int>(std::min<double>(width - 1, x1)) / tile;
    const int ty0 = static_cast<int>(std::max(0.0, y0)) / tile, ty1 = static_cast<int>(std::min<double>(height - 1, y1)) / tile;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) b.lists[static_cast<std::size_t>(ty) * b.tiles_x + tx].push_back(static_cast<int>(i));
  }
  return b;
}

namespace detail {

template <typename Fn>
void for_each_tile_pixel(const TileBins& b, int width, int height, std::size_t t, Fn&& fn) {
  const int tx = static_cast<int>(t) % b.tiles_x, ty = static_cast<int>(t) / b.tiles_x;
  for (int y = ty * b.tile; y < std::min(height, (ty + 1) * b.tile); ++y)
    for (int x = tx * b.tile; x < std::min(width, (tx + 1) * b.tile); ++x) fn(x, y);
}

}  // namespace detail

/// Renders depth-sorted splats (black background). Per pixel, covering
/// fragments are collected near to far until transmittance drops below
/// T_min or K_max entries are used; the collected fragments are then
/// blended with C_out = C_in (1 - a) + a c starting from the farthest, and
/// each entry records its C_in. Call `cache.reset_counters()` first.
inline RgbImage rasterize_forward(const std::vector<Splat2D>& sorted, const TileBins& bins, int width, int height,
                                  ReplayCache& cache) {
  RgbImage img(width, height);
  struct Candidate {
    int index;
    double mx;
    double r;
  };
  parallel_for(bins.lists.size(), [&](std::size_t t) {
    const std::vector<int>& list = bins.lists[t];
    const int tx = static_cast<int>(t) % bins.tiles_x, ty = static_cast<int>(t) / bins.tiles_x;
    std::vector<Candidate> row;
    for (int y = ty * bins.tile; y < std::min(height, (ty + 1) * bins.tile); ++y) {
      // Outside the padded footprint box alpha is below the skip threshold,
      // so only splats whose box meets this row are visited.
      row.clear();
      for (int i : list) {
        const Splat2D& s = sorted[i];
        const double r = s.radius * (1 + 1e-6) + 1e-9;
        if (std::abs(y - s.mean2d.y()) <= r) row.push_back({i, s.mean2d.x(), r});
      }
      for (int x = tx * bins.tile; x < std::min(width, (tx + 1) * bins.tile); ++x) {
        CacheEntry* e = cache.pixel(x, y);
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        int n = 0;
        double tr = 1.0;
        for (const Candidate& cand : row) {
          if (std::abs(x - cand.mx) > cand.r) continue;
          const double a = splat_alpha(sorted[cand.index], x, y);
          if (a < kMinAlpha) continue;
          if (n == cache.kmax) {
            cache.saturated[p] = 1;
            break;
          }
          e[n].index = cand.index;
          e[n].alpha = a;
          ++n;
          tr *= 1.0 - a;
          if (tr < kMinTransmittance) break;
        }
        cache.count[p] = n;
        double c[3] = {0, 0, 0};
        for (int k = n - 1; k >= 0; --k) {
          const Vec3& col = sorted[e[k].index].color;
          for (int ch = 0; ch < 3; ++ch) {
            e[k].c_in[ch] = c[ch];
            c[ch] = blend(c[ch], e[k].alpha, col[ch]);
          }
        }
        for (int ch = 0; ch < 3; ++ch) img(x, y, ch) = c[ch];
      }
    }
  });
  return img;
}

/// Replays the cache against dL/dC and returns per-splat screen-space
/// gradients in sorted order. Tile partials are reduced in tile order, so
/// the result does not depend on the worker count.
inline std::vector<Splat2DGrad> rasterize_backward(const RgbImage& dl_dc, const std::vector<Splat2D>& sorted,
                                                   const TileBins& bins, const ReplayCache& cache) {
  const int width = dl_dc.width, height = dl_dc.height;
  std::vector<std::vector<Splat2DGrad>> partial(bins.lists.size());
  parallel_for(bins.lists.size(), [&](std::size_t t) {
    const std::vector<int>& list = bins.lists[t];
    std::vector<Splat2DGrad>& acc = partial[t];
    acc.assign(list.size(), Splat2DGrad{});
    detail::for_each_tile_pixel(bins, width, height, t, [&](int x, int y) {
      const CacheEntry* e = cache.pixel(x, y);
      const int n = cache.count[static_cast<std::size_t>(y) * width + x];
      Vec3 g(dl_dc(x, y, 0), dl_dc(x, y, 1), dl_dc(x, y, 2));
      std::size_t slot = 0;  // entries ascend in sorted index, as does the list
      for (int k = 0; k < n; ++k) {
        const Splat2D& s = sorted[e[k].index];
        const double a = e[k].alpha;
        const Vec3 c_in(e[k].c_in[0], e[k].c_in[1], e[k].c_in[2]);
        while (list[slot] != e[k].index) ++slot;
        Splat2DGrad& out = acc[slot];
        const BlendGrad bg = blend_backward(g, c_in, a, s.color);
        out.color += bg.color;
        const double da = bg.alpha;
        g = bg.c_in;
        if (a >= kMaxAlpha) continue;  // clamped: no dependence on the splat
        const Vec2 d(x - s.mean2d.x(), y - s.mean2d.y());
        out.alpha0 += da * a / s.alpha0;
        const double dp = da * a;  // d alpha / d power = alpha
        out.mean2d += dp * (s.conic * d);
        out.conic += -0.5 * dp * (d * d.transpose());
      }
    });
  });
  std::vector<Splat2DGrad> grads(sorted.size());
  for (std::size_t t = 0; t < bins.lists.size(); ++t)
    for (std::size_t j = 0; j < bins.lists[t].size(); ++j) grads[bins.lists[t][j]] += partial[t][j];
  return grads;
}

/// grads[canonical[i]] += g[i] for ascending i. `canonical` must be
/// injective into [0, grads.size()).
inline void scatter_gradients(const std::vector<ParamGrad>& g, const std::vector<int>& canonical, GaussianParams& grads) {
  if (g.size() != canonical.size()) throw std::invalid_argument("scatter: size mismatch");
  std::vector<char> seen(grads.size(), 0);
  for (int c : canonical) {
    if (c < 0 || static_cast<std::size_t>(c) >= grads.size() || seen[c]) throw std::logic_error("scatter: permutation is not injective");
    seen[c] = 1;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t c = static_cast<std::size_t>(canonical[i]);
    for (int k = 0; k < 3; ++k) {
      grads.position[3 * c + k] += g[i].position[k];
      grads.log_scale[3 * c + k] += g[i].log_scale[k];
      grads.color[3 * c + k] += g[i].color[k];
    }
    for (int k = 0; k < 4; ++k) grads.rotation[4 * c + k] += g[i].rotation[k];
    grads.opacity[c] += g[i].opacity;
  }
}

}  // namespace pocketgs
