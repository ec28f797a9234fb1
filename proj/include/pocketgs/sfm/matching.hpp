#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "pocketgs/core/geometry.hpp"
#include "pocketgs/sfm/features.hpp"

namespace pocketgs {

struct Match {
  int a = 0;  // keypoint index in the first set
  int b = 0;  // keypoint index in the second set
  int distance = 0;
};

struct MatchConfig {
  double ratio = 0.8;
};

namespace detail {

struct Nearest {
  int index = -1;
  int best = std::numeric_limits<int>::max();
  int second = std::numeric_limits<int>::max();
};

inline Nearest nearest(const Descriptor& d, const std::vector<Descriptor>& set) {
  Nearest n;
  for (std::size_t j = 0; j < set.size(); ++j) {
    const int h = hamming(d, set[j]);
    if (h < n.best) {
      n.second = n.best;
      n.best = h;
      n.index = static_cast<int>(j);
    } else if (h < n.second) {
      n.second = h;
    }
  }
  return n;
}

inline bool passes_ratio(const Nearest& n, double ratio) {
  if (n.index < 0) return false;
  if (n.second == std::numeric_limits<int>::max()) return true;
  return n.best < ratio * n.second;
}

}  // namespace detail

/// Mutual nearest neighbours under Hamming distance; each direction must also
/// pass the ratio test best < ratio * second-best.
inline std::vector<Match> match(const FeatureSet& a, const FeatureSet& b, const MatchConfig& cfg = {}) {
  std::vector<Match> out;
  if (a.descriptors.empty() || b.descriptors.empty()) return out;
  std::vector<detail::Nearest> back(b.descriptors.size());
  for (std::size_t j = 0; j < b.descriptors.size(); ++j) back[j] = detail::nearest(b.descriptors[j], a.descriptors);
  for (std::size_t i = 0; i < a.descriptors.size(); ++i) {
    const auto fwd = detail::nearest(a.descriptors[i], b.descriptors);
    if (!detail::passes_ratio(fwd, cfg.ratio)) continue;
    const auto& bk = back[fwd.index];
    if (bk.index != static_cast<int>(i) || !detail::passes_ratio(bk, cfg.ratio)) continue;
    out.push_back({static_cast<int>(i), fwd.index, fwd.best});
  }
  return out;
}

/// Keeps matches whose symmetric point-to-epipolar-line distance under the
/// given (coarse) poses is below `max_px`.
inline std::vector<Match> epipolar_filter(const std::vector<Match>& matches, const FeatureSet& fa, const FeatureSet& fb,
                                          const Intrinsics& ka, const Intrinsics& kb, const PoseSE3& pa,
                                          const PoseSE3& pb, double max_px) {
  const PoseSE3 rel = pb * pa.inverse();  // camera a -> camera b
  const Vec3 t = rel.translation;
  if (t.norm() < 1e-12) return matches;
  const Mat3 e = skew(t) * rel.rotation;
  Mat3 kai, kbi;
  kai << 1 / ka.fx, 0, -ka.cx / ka.fx, 0, 1 / ka.fy, -ka.cy / ka.fy, 0, 0, 1;
  kbi << 1 / kb.fx, 0, -kb.cx / kb.fx, 0, 1 / kb.fy, -kb.cy / kb.fy, 0, 0, 1;
  const Mat3 f = kbi.transpose() * e * kai;
  std::vector<Match> out;
  for (const auto& m : matches) {
    const Vec3 xa(fa.keypoints[m.a].x, fa.keypoints[m.a].y, 1.0);
    const Vec3 xb(fb.keypoints[m.b].x, fb.keypoints[m.b].y, 1.0);
    const Vec3 lb = f * xa;
    const Vec3 la = f.transpose() * xb;
    const double db = std::abs(xb.dot(lb)) / std::max(1e-12, lb.head<2>().norm());
    const double da = std::abs(xa.dot(la)) / std::max(1e-12, la.head<2>().norm());
    if (std::max(da, db) <= max_px) out.push_back(m);
  }
  return out;
}

/// Pairwise correspondences between views and the tracks built from them.
struct MatchGraph {
  struct PairMatches {
    int view_a = 0;
    int view_b = 0;
    std::vector<Match> matches;
  };
  struct TrackElement {
    int view = 0;
    int keypoint = 0;
  };
  std::vector<PairMatches> pairs;
  std::vector<std::vector<TrackElement>> tracks;
};

/// Joins pairwise matches transitively (union-find). Components that contain
/// two keypoints of one view are discarded; the rest with >= 2 views become
/// tracks, ordered by their smallest (view, keypoint) element.
inline void build_tracks(MatchGraph& graph, const std::vector<int>& keypoints_per_view) {
  std::vector<int> offset(keypoints_per_view.size() + 1, 0);
  for (std::size_t v = 0; v < keypoints_per_view.size(); ++v) offset[v + 1] = offset[v] + keypoints_per_view[v];
  std::vector<int> parent(offset.back());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> touched(parent.size(), 0);
  for (const auto& pm : graph.pairs)
    for (const auto& m : pm.matches) {
      const int u = offset[pm.view_a] + m.a, v = offset[pm.view_b] + m.b;
      touched[u] = touched[v] = 1;
      const int ru = find(u), rv = find(v);
      if (ru != rv) parent[std::max(ru, rv)] = std::min(ru, rv);
    }
  std::map<int, std::vector<MatchGraph::TrackElement>> comps;
  for (int view = 0; view < static_cast<int>(keypoints_per_view.size()); ++view)
    for (int k = 0; k < keypoints_per_view[view]; ++k) {
      const int node = offset[view] + k;
      if (touched[node]) comps[find(node)].push_back({view, k});
    }
  graph.tracks.clear();
  for (auto& [root, elems] : comps) {
    bool conflict = false;
    for (std::size_t i = 1; i < elems.size(); ++i)
      if (elems[i].view == elems[i - 1].view) conflict = true;
    if (!conflict && elems.size() >= 2) graph.tracks.push_back(std::move(elems));
  }
}

}  // namespace pocketgs
