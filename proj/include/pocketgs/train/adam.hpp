#pragma once

#include <array>
#include <cmath>

#include "pocketgs/core/gaussian_model.hpp"

namespace pocketgs {

struct AdamConfig {
  // Indexed by ParamGroup.
  std::array<double, kParamGroups> lr = {1.6e-4, 5e-3, 1e-3, 5e-2, 2.5e-3};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

/// One bias-corrected Adam step over canonical buffers. A non-finite
/// gradient entry leaves that parameter and its moments untouched; the
/// number of such entries is returned. Quaternions that moved are
/// renormalized after the step.
inline long adam_step(GaussianModel& model, const GaussianParams& grads, const AdamConfig& cfg) {
  ++model.adam_step;
  const double t = model.adam_step;
  const double bc1 = 1 - std::pow(cfg.beta1, t), bc2 = 1 - std::pow(cfg.beta2, t);
  long skipped = 0;
  std::vector<char> moved(model.size(), 0);
  for (int gi = 0; gi < kParamGroups; ++gi) {
    const auto g = static_cast<ParamGroup>(gi);
    std::vector<double>& p = model.params.group(g);
    std::vector<double>& m = model.adam_m.group(g);
    std::vector<double>& v = model.adam_v.group(g);
    const std::vector<double>& d = grads.group(g);
    const double lr = cfg.lr[gi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(d[i])) {
        ++skipped;
        continue;
      }
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * d[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * d[i] * d[i];
      const double step = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
      p[i] -= step;
      if (g == ParamGroup::Rotation && step != 0.0) moved[i / 4] = 1;
    }
  }
  auto& q = model.params.rotation;
  for (std::size_t i = 0; i + 3 < q.size(); i += 4) {
    if (!moved[i / 4]) continue;
    const double n = std::sqrt(q[i] * q[i] + q[i + 1] * q[i + 1] + q[i + 2] * q[i + 2] + q[i + 3] * q[i + 3]);
    if (n > 0)
      for (int k = 0; k < 4; ++k) q[i + k] /= n;
  }
  return skipped;
}

}  // namespace pocketgs
