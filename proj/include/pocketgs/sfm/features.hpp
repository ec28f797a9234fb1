#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pocketgs/core/frame.hpp"
#include "pocketgs/core/random.hpp"

namespace pocketgs {

using Descriptor = std::array<std::uint64_t, 4>;  // 256 bits

inline int hamming(const Descriptor& a, const Descriptor& b) {
  return std::popcount(a[0] ^ b[0]) + std::popcount(a[1] ^ b[1]) + std::popcount(a[2] ^ b[2]) +
         std::popcount(a[3] ^ b[3]);
}

struct Keypoint {
  double x = 0;
  double y = 0;
  double response = 0;
  double angle = 0;  // radians, intensity-centroid orientation
};

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
  bool textureless = false;  // fewer than kMinKeypoints; excluded from BA
};

struct FeatureConfig {
  int target_keypoints = 1500;
  // FAST thresholds (0-255 luma units) tried in order until the target is met.
  std::array<double, 4> thresholds = {40.0, 20.0, 10.0, 5.0};
  int border = 16;  // keeps the rotated 31x31 sampling patch inside the image
};

inline constexpr int kMinKeypoints = 8;

namespace detail {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
inline constexpr std::array<std::array<int, 2>, 16> kFastCircle = {{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                                    {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                                                    {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                                                    {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};

/// FAST-9 segment test. Returns the corner score (sum of |diff| - t over the
/// qualifying side) or 0 when the pixel is not a corner.
inline double fast_score(const GrayImage& img, int x, int y, double t) {
  const double c = img(x, y);
  std::array<int, 16> state{};
  for (int k = 0; k < 16; ++k) {
    const double v = img(x + kFastCircle[k][0], y + kFastCircle[k][1]);
    state[k] = v > c + t ? 1 : (v < c - t ? -1 : 0);
  }
  for (int side : {1, -1}) {
    int run = 0;
    for (int k = 0; k < 32; ++k) {
      if (state[k & 15] == side) {
        if (++run >= 9) {
          double score = 0;
          for (int m = 0; m < 16; ++m) {
            if (state[m] != side) continue;
            const double v = img(x + kFastCircle[m][0], y + kFastCircle[m][1]);
            score += std::abs(v - c) - t;
          }
          return score;
        }
      } else {
        run = 0;
      }
    }
  }
  return 0.0;
}

struct BriefPattern {
  std::array<std::array<double, 4>, 256> pairs;  // (x1, y1, x2, y2)
};

inline const BriefPattern& brief_pattern() {
  static const BriefPattern pattern = [] {
    BriefPattern p;
    Rng rng(0x0b71efULL);
    const double sigma = 31.0 / 5.0;
    auto draw = [&] {
      for (;;) {
        const double x = rng.normal(0, sigma), y = rng.normal(0, sigma);
        if (x * x + y * y <= 14.0 * 14.0) return std::array<double, 2>{x, y};
      }
    };
    for (auto& pr : p.pairs) {
      const auto a = draw();
      const auto b = draw();
      pr = {a[0], a[1], b[0], b[1]};
    }
    return p;
  }();
  return pattern;
}

inline double centroid_angle(const GrayImage& img, int x, int y, int radius) {
  double m01 = 0, m10 = 0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      const double v = img(x + dx, y + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  return std::atan2(m01, m10);
}

}  // namespace detail

/// FAST-9 corners with 3x3 non-maximum suppression, oriented by intensity
/// centroid and described by steered 256-bit BRIEF on the 5x5 box-smoothed
/// luma. The threshold drops through cfg.thresholds until the target count is
/// met; the strongest target_keypoints survive.
inline FeatureSet detect_and_describe(const GrayImage& luma, const FeatureConfig& cfg = {}) {
  FeatureSet fs;
  const int w = luma.width, h = luma.height;
  const int b = std::max(cfg.border, 4);
  GrayImage scaled(w, h);
  for (std::size_t i = 0; i < luma.data.size(); ++i) scaled.data[i] = luma.data[i] * 255.0;

  std::vector<Keypoint> kps;
  if (w > 2 * b && h > 2 * b) {
    GrayImage score(w, h);
    for (double t : cfg.thresholds) {
      std::fill(score.data.begin(), score.data.end(), 0.0);
      for (int y = b; y < h - b; ++y)
        for (int x = b; x < w - b; ++x) score(x, y) = detail::fast_score(scaled, x, y, t);
      kps.clear();
      for (int y = b; y < h - b; ++y)
        for (int x = b; x < w - b; ++x) {
          const double s = score(x, y);
          if (s <= 0) continue;
          bool is_max = true;
          for (int dy = -1; dy <= 1 && is_max; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0) continue;
              const double o = score(x + dx, y + dy);
              // Ties resolve toward the earlier pixel in row-major order.
              if (o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0)))) {
                is_max = false;
                break;
              }
            }
          if (is_max) kps.push_back({double(x), double(y), s, 0.0});
        }
      if (static_cast<int>(kps.size()) >= cfg.target_keypoints) break;
    }
  }
  std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& c) { return a.response > c.response; });
  if (static_cast<int>(kps.size()) > cfg.target_keypoints) kps.resize(cfg.target_keypoints);

  const GrayImage smooth = box_blur(scaled, 2);
  const auto& pattern = detail::brief_pattern();
  fs.keypoints.reserve(kps.size());
  fs.descriptors.reserve(kps.size());
  for (Keypoint kp : kps) {
    const int x = static_cast<int>(kp.x), y = static_cast<int>(kp.y);
    kp.angle = detail::centroid_angle(smooth, x, y, 15);
    const double ca = std::cos(kp.angle), sa = std::sin(kp.angle);
    Descriptor d{};
    for (int k = 0; k < 256; ++k) {
      const auto& pr = pattern.pairs[k];
      auto sample = [&](double px, double py) {
        const int sx = x + static_cast<int>(std::lround(ca * px - sa * py));
        const int sy = y + static_cast<int>(std::lround(sa * px + ca * py));
        return smooth(std::clamp(sx, 0, w - 1), std::clamp(sy, 0, h - 1));
      };
      if (sample(pr[0], pr[1]) < sample(pr[2], pr[3])) d[k >> 6] |= (std::uint64_t{1} << (k & 63));
    }
    fs.keypoints.push_back(kp);
    fs.descriptors.push_back(d);
  }
  fs.textureless = static_cast<int>(fs.keypoints.size()) < kMinKeypoints;
  return fs;
}

inline FeatureSet detect_and_describe(const Frame& frame, const FeatureConfig& cfg = {}) {
  return detect_and_describe(frame.luma, cfg);
}

}  // namespace pocketgs
