#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace pocketgs {

/// Row-major planar-interleaved buffer with `C` channels per pixel.
template <int C>
struct ImageT {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImageT() = default;
  ImageT(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * C, fill) {}

  static constexpr int channels = C;

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * C + c;
  }
  double& operator()(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double operator()(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return data.empty(); }
  bool same_size(const ImageT& o) const { return width == o.width && height == o.height; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

using RgbImage = ImageT<3>;
using GrayImage = ImageT<1>;

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline GrayImage luma_of(const RgbImage& rgb) {
  GrayImage out(rgb.width, rgb.height);
  const std::size_t n = rgb.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &rgb.data[i * 3];
    out.data[i] = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
  }
  return out;
}

/// Box blur with a (2r+1)^2 window; borders use the clamped window.
inline GrayImage box_blur(const GrayImage& in, int r) {
  GrayImage tmp(in.width, in.height), out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double s = 0;
      int n = 0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= in.width) continue;
        s += in(xx, y);
        ++n;
      }
      tmp(x, y) = s / n;
    }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double s = 0;
      int n = 0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= in.height) continue;
        s += tmp(x, yy);
        ++n;
      }
      out(x, y) = s / n;
    }
  return out;
}

}  // namespace pocketgs
