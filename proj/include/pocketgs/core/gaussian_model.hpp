#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pocketgs/core/geometry.hpp"

namespace pocketgs {

enum class ParamGroup { Position = 0, LogScale, Rotation, Opacity, Color };
inline constexpr int kParamGroups = 5;
inline constexpr std::array<int, kParamGroups> kGroupWidth = {3, 3, 4, 1, 3};
inline constexpr int kParamsPerGaussian = 14;

/// Canonical structure-of-arrays parameter storage. Also used for gradients
/// and optimizer moments, which share the layout element for element.
struct GaussianParams {
  std::vector<double> position;   // N x 3, meters
  std::vector<double> log_scale;  // N x 3, log meters
  std::vector<double> rotation;   // N x 4, unit quaternion (w, x, y, z)
  std::vector<double> opacity;    // N, pre-sigmoid
  std::vector<double> color;      // N x 3, pre-sigmoid

  std::size_t size() const { return opacity.size(); }

  void resize(std::size_t n, double fill = 0.0) {
    position.assign(3 * n, fill);
    log_scale.assign(3 * n, fill);
    rotation.assign(4 * n, fill);
    opacity.assign(n, fill);
    color.assign(3 * n, fill);
  }

  std::vector<double>& group(ParamGroup g) {
    switch (g) {
      case ParamGroup::Position: return position;
      case ParamGroup::LogScale: return log_scale;
      case ParamGroup::Rotation: return rotation;
      case ParamGroup::Opacity: return opacity;
      case ParamGroup::Color: break;
    }
    return color;
  }
  const std::vector<double>& group(ParamGroup g) const {
    return const_cast<GaussianParams*>(this)->group(g);
  }

  bool all_finite() const { return first_non_finite() < 0; }

  /// Index of the first Gaussian with a non-finite parameter, or -1.
  long first_non_finite() const {
    for (std::size_t i = 0; i < size(); ++i)
      for (int g = 0; g < kParamGroups; ++g) {
        const auto& v = group(static_cast<ParamGroup>(g));
        const int w = kGroupWidth[g];
        for (int k = 0; k < w; ++k)
          if (!std::isfinite(v[i * w + k])) return static_cast<long>(i);
      }
    return -1;
  }

  bool operator==(const GaussianParams&) const = default;

  Vec3 mean(std::size_t i) const { return {position[3 * i], position[3 * i + 1], position[3 * i + 2]}; }
  Vec3 scale_log(std::size_t i) const { return {log_scale[3 * i], log_scale[3 * i + 1], log_scale[3 * i + 2]}; }
  Vec4 quat(std::size_t i) const {
    return {rotation[4 * i], rotation[4 * i + 1], rotation[4 * i + 2], rotation[4 * i + 3]};
  }
  Vec3 rgb(std::size_t i) const {
    return {sigmoid(color[3 * i]), sigmoid(color[3 * i + 1]), sigmoid(color[3 * i + 2])};
  }
  double alpha(std::size_t i) const { return sigmoid(opacity[i]); }

  /// World covariance R diag(exp(2 log_scale)) R^T.
  Mat3 covariance(std::size_t i) const {
    const Vec4 q = quat(i);
    const Mat3 r = quat_to_matrix(q / q.norm());
    const Vec3 s = scale_log(i).array().exp();
    return r * s.array().square().matrix().asDiagonal() * r.transpose();
  }
};

/// Trained scene: canonical parameters plus Adam moments in the same order.
struct GaussianModel {
  GaussianParams params;
  GaussianParams adam_m;
  GaussianParams adam_v;
  int adam_step = 0;

  std::size_t size() const { return params.size(); }

  void resize(std::size_t n) {
    params.resize(n);
    for (std::size_t i = 0; i < n; ++i) params.rotation[4 * i] = 1.0;
    adam_m.resize(n);
    adam_v.resize(n);
    adam_step = 0;
  }

  void set_gaussian(std::size_t i, const Vec3& mu, const Vec3& log_scale, const Vec4& q, double opacity_logit,
                    const Vec3& color_logit) {
    for (int k = 0; k < 3; ++k) {
      params.position[3 * i + k] = mu[k];
      params.log_scale[3 * i + k] = log_scale[k];
      params.color[3 * i + k] = color_logit[k];
    }
    for (int k = 0; k < 4; ++k) params.rotation[4 * i + k] = q[k];
    params.opacity[i] = opacity_logit;
  }
};

}  // namespace pocketgs
