#pragma once

#include <vector>

#include "pocketgs/core/parallel.hpp"
#include "pocketgs/sfm/sparse_map.hpp"
#include "pocketgs/sfm/triangulation.hpp"

namespace pocketgs {

struct TrackObservation {
  int camera = 0;
  Vec2 pixel = Vec2::Zero();
  int tag = -1;
};

/// Builds the initial map by triangulating every track under the given
/// (coarse) poses. Tracks that fail triangulation are dropped; point indices
/// follow the surviving tracks in input order.
inline SparseMap triangulate_tracks(const std::vector<PoseSE3>& poses, const std::vector<Intrinsics>& intrinsics,
                                    const std::vector<int>& frame_ids,
                                    const std::vector<std::vector<TrackObservation>>& tracks, double min_angle_deg) {
  SparseMap map;
  map.poses = poses;
  map.intrinsics = intrinsics;
  map.frame_ids = frame_ids;
  std::vector<Triangulation> tri(tracks.size());
  parallel_for(tracks.size(), [&](std::size_t t) {
    std::vector<TrackView> views;
    for (const auto& o : tracks[t]) views.push_back({&poses[o.camera], &intrinsics[o.camera], o.pixel});
    tri[t] = triangulate(views, min_angle_deg);
  });
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (!tri[t].ok()) continue;
    const int j = map.num_points();
    map.points.push_back(tri[t].point);
    for (const auto& o : tracks[t]) {
      Observation ob;
      ob.camera = o.camera;
      ob.point = j;
      ob.pixel = o.pixel;
      ob.tag = o.tag;
      map.observations.push_back(ob);
    }
  }
  return map;
}

}  // namespace pocketgs
