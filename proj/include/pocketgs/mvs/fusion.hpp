#pragma once

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "pocketgs/core/frame.hpp"
#include "pocketgs/core/point_cloud.hpp"
#include "pocketgs/mvs/stereo.hpp"

namespace pocketgs {

struct FusionConfig {
  double min_depth = 0.05;  // meters
  double max_depth = 5.0;   // meters
  double voxel = 0.005;     // meters; <= 0 keeps every point
};

/// Back-projects every valid pixel with depth in [min_depth, max_depth]
/// through its camera, colored by the frame. `images[i]` belongs to
/// `depth_maps[i]`, whose `camera` indexes `poses`/`intrinsics`. Points are
/// visited by map order then row-major pixel; with voxel subsampling the
/// first point to reach a voxel is kept, so survivors are unmodified
/// back-projections.
inline std::vector<DensePoint> fuse(const std::vector<DepthMap>& depth_maps, const std::vector<const RgbImage*>& images,
                                    const std::vector<PoseSE3>& poses, const std::vector<Intrinsics>& intrinsics,
                                    const FusionConfig& cfg = {}) {
  std::vector<std::vector<DensePoint>> per_map(depth_maps.size());
  parallel_for(depth_maps.size(), [&](std::size_t m) {
    const DepthMap& dm = depth_maps[m];
    const PoseSE3 c2w = poses[dm.camera].inverse();
    const Intrinsics& k = intrinsics[dm.camera];
    const RgbImage* img = images[m];
    for (int y = 0; y < dm.height; ++y)
      for (int x = 0; x < dm.width; ++x) {
        const double d = dm.depth[dm.index(x, y)];
        if (!(d > 0) || d < cfg.min_depth || d > cfg.max_depth) continue;
        DensePoint p;
        p.position = c2w.apply(k.backproject(x, y, d));
        if (img) p.color = Vec3((*img)(x, y, 0), (*img)(x, y, 1), (*img)(x, y, 2));
        p.view_origin = c2w.translation;
        p.has_view = true;
        per_map[m].push_back(p);
      }
  });
  std::vector<DensePoint> out;
  std::map<std::array<long long, 3>, char> occupied;
  for (const auto& pts : per_map)
    for (const DensePoint& p : pts) {
      if (cfg.voxel > 0) {
        const std::array<long long, 3> key = {static_cast<long long>(std::floor(p.position.x() / cfg.voxel)),
                                              static_cast<long long>(std::floor(p.position.y() / cfg.voxel)),
                                              static_cast<long long>(std::floor(p.position.z() / cfg.voxel))};
        if (!occupied.emplace(key, 1).second) continue;
      }
      out.push_back(p);
    }
  return out;
}

}  // namespace pocketgs
