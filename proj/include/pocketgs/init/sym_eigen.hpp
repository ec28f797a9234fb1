#pragma once

#include <algorithm>
#include <cmath>

#include "pocketgs/core/geometry.hpp"

namespace pocketgs {

struct SymEigen3 {
  Vec3 values;   // ascending
  Mat3 vectors;  // column j pairs with values[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Each
/// eigenvector is signed so its largest-magnitude component is positive
/// (first such component on ties), which makes the output deterministic.
inline SymEigen3 sym_eigen3(const Mat3& m) {
  Mat3 a = 0.5 * (m + m.transpose());
  Mat3 v = Mat3::Identity();
  const double scale = a.cwiseAbs().maxCoeff();
  for (int sweep = 0; sweep < 50 && scale > 0; ++sweep) {
    const double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
    if (off <= 1e-18 * scale) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        Mat3 j = Mat3::Identity();
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = s;
        j(q, p) = -s;
        a = j.transpose() * a * j;
        a(p, q) = a(q, p) = 0.0;
        v = v * j;
      }
  }
  int idx[3] = {0, 1, 2};
  std::stable_sort(idx, idx + 3, [&](int x, int y) { return a(x, x) < a(y, y); });
  SymEigen3 out;
  for (int j = 0; j < 3; ++j) {
    out.values[j] = a(idx[j], idx[j]);
    Vec3 col = v.col(idx[j]);
    int big = 0;
    for (int r = 1; r < 3; ++r)
      if (std::abs(col[r]) > std::abs(col[big])) big = r;
    if (col[big] < 0) col = -col;
    out.vectors.col(j) = col;
  }
  return out;
}

}  // namespace pocketgs
