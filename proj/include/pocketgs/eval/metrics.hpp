#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pocketgs/train/loss.hpp"

namespace pocketgs {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels, capped for identical images.
inline double psnr(const RgbImage& a, const RgbImage& b) {
  if (!a.same_size(b)) throw std::invalid_argument("psnr: size mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  const double mse = se / static_cast<double>(a.data.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

struct ImageMetrics {
  double psnr = 0;
  double ssim = 0;
};

inline ImageMetrics evaluate_pair(const RgbImage& rendered, const RgbImage& truth) {
  return {psnr(rendered, truth), ssim(rendered, truth)};
}

}  // namespace pocketgs
