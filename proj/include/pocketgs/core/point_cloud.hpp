#pragma once

#include "pocketgs/core/geometry.hpp"

namespace pocketgs {

struct DensePoint {
  Vec3 position = Vec3::Zero();
  Vec3 color = Vec3::Zero();  // linear RGB in [0, 1]
  // Center of the camera that produced the point; orients normals.
  Vec3 view_origin = Vec3::Zero();
  bool has_view = false;
};

}  // namespace pocketgs
