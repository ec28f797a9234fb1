#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pocketgs/core/image.hpp"

namespace pocketgs {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline std::array<double, 11> ssim_kernel() {
  std::array<double, 11> k{};
  double s = 0;
  for (int i = 0; i < 11; ++i) {
    k[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    s += k[i];
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable 11x11 Gaussian filter of one plane with zero padding.
inline std::vector<double> blur(const std::vector<double>& in, int w, int h) {
  static const std::array<double, 11> k = ssim_kernel();
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -5; i <= 5; ++i)
        if (x + i >= 0 && x + i < w) s += k[i + 5] * in[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -5; i <= 5; ++i)
        if (y + i >= 0 && y + i < h) s += k[i + 5] * tmp[static_cast<std::size_t>(y + i) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM over pixels and channels (11x11 Gaussian window, sigma 1.5).
/// Windows truncated by the border are renormalized. With `grad`, fills
/// dSSIM/dx for the first image.
inline double ssim(const RgbImage& x, const RgbImage& y, RgbImage* grad = nullptr) {
  if (!x.same_size(y)) throw std::invalid_argument("ssim: size mismatch");
  const int w = x.width, h = x.height;
  const std::size_t n = x.pixel_count();
  const std::vector<double> norm = detail::blur(std::vector<double>(n, 1.0), w, h);
  if (grad) *grad = RgbImage(w, h);
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> px(n), py(n), pxx(n), pyy(n), pxy(n);
    for (std::size_t i = 0; i < n; ++i) {
      px[i] = x.data[3 * i + c];
      py[i] = y.data[3 * i + c];
      pxx[i] = px[i] * px[i];
      pyy[i] = py[i] * py[i];
      pxy[i] = px[i] * py[i];
    }
    auto mx = detail::blur(px, w, h), my = detail::blur(py, w, h), mxx = detail::blur(pxx, w, h),
         myy = detail::blur(pyy, w, h), mxy = detail::blur(pxy, w, h);
    std::vector<double> ga(n), gb(n), gc(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double wn = norm[i];
      const double ux = mx[i] / wn, uy = my[i] / wn;
      const double sxx = mxx[i] / wn - ux * ux, syy = myy[i] / wn - uy * uy, sxy = mxy[i] / wn - ux * uy;
      const double a1 = 2 * ux * uy + kSsimC1, a2 = 2 * sxy + kSsimC2;
      const double b1 = ux * ux + uy * uy + kSsimC1, b2 = sxx + syy + kSsimC2;
      const double s = a1 * a2 / (b1 * b2);
      total += s;
      if (!grad) continue;
      // Partials with respect to the local statistics of x.
      const double d_ux = (2 * uy * a2) / (b1 * b2) - s * 2 * ux / b1;
      const double d_sxx = -s / b2;
      const double d_sxy = 2 * a1 / (b1 * b2);
      // Statistics are normalized window sums of x, x^2 and x y.
      ga[i] = (d_ux - 2 * ux * d_sxx - uy * d_sxy) / wn;
      gb[i] = d_sxx / wn;
      gc[i] = d_sxy / wn;
    }
    if (!grad) continue;
    const auto fa = detail::blur(ga, w, h), fb = detail::blur(gb, w, h), fc = detail::blur(gc, w, h);
    const double scale = 1.0 / (3.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) grad->data[3 * i + c] = scale * (fa[i] + 2 * px[i] * fb[i] + py[i] * fc[i]);
  }
  return total / (3.0 * static_cast<double>(n));
}

struct LossValue {
  double total = 0;
  double l1 = 0;
  double ssim = 0;
};

/// (1 - lambda) L1 + lambda (1 - SSIM) and its gradient w.r.t. `rendered`.
inline LossValue compute_loss(const RgbImage& rendered, const RgbImage& target, double lambda_ssim, RgbImage* grad) {
  if (!rendered.same_size(target)) throw std::invalid_argument("loss: size mismatch");
  LossValue v;
  const std::size_t m = rendered.data.size();
  for (std::size_t i = 0; i < m; ++i) v.l1 += std::abs(rendered.data[i] - target.data[i]);
  v.l1 /= static_cast<double>(m);
  RgbImage gs;
  v.ssim = ssim(rendered, target, grad ? &gs : nullptr);
  v.total = (1 - lambda_ssim) * v.l1 + lambda_ssim * (1 - v.ssim);
  if (grad) {
    *grad = RgbImage(rendered.width, rendered.height);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = rendered.data[i] - target.data[i];
      const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      grad->data[i] = (1 - lambda_ssim) * sgn / static_cast<double>(m) - lambda_ssim * gs.data[i];
    }
  }
  return v;
}

}  // namespace pocketgs
