#pragma once

#include "pocketgs/core/geometry.hpp"
#include "pocketgs/core/image.hpp"

namespace pocketgs {

struct Frame {
  int id = 0;
  double timestamp = 0.0;
  RgbImage image;  // linear RGB in [0, 1]
  GrayImage luma;
  Intrinsics intrinsics;
  PoseSE3 coarse_pose;
};

inline Frame make_frame(int id, double timestamp, RgbImage image, const Intrinsics& k, const PoseSE3& pose) {
  Frame f;
  f.id = id;
  f.timestamp = timestamp;
  f.luma = luma_of(image);
  f.image = std::move(image);
  f.intrinsics = k;
  f.coarse_pose = pose;
  return f;
}

}  // namespace pocketgs
