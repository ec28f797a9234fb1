#pragma once

#include <string>
#include <vector>

#include "pocketgs/core/json_io.hpp"
#include "pocketgs/mvs/fusion.hpp"
#include "pocketgs/mvs/reference.hpp"
#include "pocketgs/mvs/stereo.hpp"

namespace pocketgs {

struct MvsConfig {
  int hypotheses = 64;
  int census_window = 7;
  int p1 = 6;
  int p2 = 96;
  double conf_thresh = 0.4;
  ReferenceConfig reference;
  FusionConfig fusion;
};

struct MvsFrameLog {
  int camera = -1;
  int frame_id = -1;
  int reference = -1;  // camera index, -1 when skipped
  DepthRange range;
  int valid_pixels = 0;
  std::vector<ReferenceCandidate> top;
};

struct MvsResult {
  std::vector<DepthMap> depth_maps;
  std::vector<DensePoint> cloud;
  std::vector<MvsFrameLog> frames;
  std::vector<std::string> warnings;
};

/// Depth for one target/reference pair: census, plane sweep, SGM, WTA.
inline DepthMap compute_depth_map(const CensusImage& target, const Intrinsics& kt, const PoseSE3& pose_t,
                                  const CensusImage& reference, const Intrinsics& kr, const PoseSE3& pose_r,
                                  const DepthRange& range, const MvsConfig& cfg) {
  const CostVolume raw = plane_sweep(target, kt, pose_t, reference, kr, pose_r, range);
  const CostVolume agg = sgm_aggregate(raw, cfg.p1, cfg.p2);
  return extract_depth(agg, range, cfg.conf_thresh);
}

/// Single-reference MVS over every camera of `map`. `luma[c]` and `rgb[c]`
/// are the images of camera c.
inline MvsResult run_mvs(const SparseMap& map, const std::vector<const GrayImage*>& luma,
                         const std::vector<const RgbImage*>& rgb, const MvsConfig& cfg = {}) {
  MvsResult res;
  const int nc = map.num_cameras();
  std::vector<CensusImage> census(nc);
  parallel_for(static_cast<std::size_t>(nc), [&](std::size_t c) { census[c] = census_transform(*luma[c], cfg.census_window); });
  std::vector<int> all(nc);
  for (int c = 0; c < nc; ++c) all[c] = c;

  std::vector<const RgbImage*> used_images;
  for (int c = 0; c < nc; ++c) {
    MvsFrameLog log;
    log.camera = c;
    log.frame_id = map.frame_ids[c];
    log.range = depth_range(c, map, cfg.hypotheses);
    if (log.range.fallback)
      res.warnings.push_back("frame " + std::to_string(log.frame_id) + ": fewer than 5 visible points, global depth range");
    const ReferenceChoice choice = select_reference(c, all, map, cfg.reference);
    log.top = choice.top;
    log.reference = choice.best;
    if (choice.best < 0) {
      res.warnings.push_back("frame " + std::to_string(log.frame_id) + ": no reference above the angle floor, skipped");
      res.frames.push_back(log);
      continue;
    }
    const int r = choice.best;
    DepthMap dm = compute_depth_map(census[c], map.intrinsics[c], map.poses[c], census[r], map.intrinsics[r],
                                    map.poses[r], log.range, cfg);
    dm.camera = c;
    log.valid_pixels = dm.valid_count();
    res.depth_maps.push_back(std::move(dm));
    used_images.push_back(rgb[c]);
    res.frames.push_back(log);
  }
  res.cloud = fuse(res.depth_maps, used_images, map.poses, map.intrinsics, cfg.fusion);
  if (res.cloud.empty()) res.warnings.push_back("MVS produced no valid depth; falling back to sparse points");
  return res;
}

/// Depth as a single-channel image, 0 where invalid.
inline GrayImage depth_image(const DepthMap& dm) {
  GrayImage g(dm.width, dm.height);
  g.data = dm.depth;
  return g;
}

inline json to_json(const MvsResult& r) {
  json j;
  j["points"] = r.cloud.size();
  j["warnings"] = r.warnings;
  j["frames"] = json::array();
  for (const auto& f : r.frames) {
    json top = json::array();
    for (const auto& t : f.top)
      top.push_back({{"camera", t.camera}, {"score", t.score}, {"baseline", t.baseline}, {"alpha_deg", t.alpha_deg}});
    j["frames"].push_back({{"camera", f.camera},
                           {"frame_id", f.frame_id},
                           {"reference", f.reference},
                           {"d_min", f.range.d_min},
                           {"d_max", f.range.d_max},
                           {"range_fallback", f.range.fallback},
                           {"range_low_support", f.range.low_support},
                           {"valid_pixels", f.valid_pixels},
                           {"top_references", top}});
  }
  return j;
}

}  // namespace pocketgs
