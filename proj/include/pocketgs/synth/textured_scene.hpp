#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "pocketgs/core/frame.hpp"
#include "pocketgs/core/parallel.hpp"
#include "pocketgs/core/random.hpp"
#include "pocketgs/sfm/sparse_map.hpp"
#include "pocketgs/synth/ba_scene.hpp"

namespace pocketgs {

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double lattice(std::uint64_t seed, long long i, long long j) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ull ^
                                                   splitmix(static_cast<std::uint64_t>(j))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Smoothly interpolated lattice noise in [0, 1] with unit cell size.
inline double value_noise(std::uint64_t seed, double u, double v) {
  const double fu = std::floor(u), fv = std::floor(v);
  const long long i = static_cast<long long>(fu), j = static_cast<long long>(fv);
  double a = u - fu, b = v - fv;
  a = a * a * (3 - 2 * a);
  b = b * b * (3 - 2 * b);
  const double v00 = detail::lattice(seed, i, j), v10 = detail::lattice(seed, i + 1, j);
  const double v01 = detail::lattice(seed, i, j + 1), v11 = detail::lattice(seed, i + 1, j + 1);
  return (v00 * (1 - a) + v10 * a) * (1 - b) + (v01 * (1 - a) + v11 * a) * b;
}

/// Planar rectangle origin + s u_axis + t v_axis, s in [0, u_len], t in
/// [0, v_len], with a procedural color texture of characteristic size
/// `feature` (meters).
struct TexturedQuad {
  Vec3 origin = Vec3::Zero();
  Vec3 u_axis = Vec3::UnitX();
  Vec3 v_axis = Vec3::UnitY();
  double u_len = 1.0;
  double v_len = 1.0;
  double feature = 0.01;
  std::uint64_t seed = 1;

  Vec3 normal() const { return u_axis.cross(v_axis).normalized(); }

  Vec3 color(double s, double t) const {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
      const std::uint64_t sd = seed * 7919 + ch * 104729;
      double n = 0;
      n += 0.45 * value_noise(sd + 1, s / (4 * feature), t / (4 * feature));
      n += 0.35 * value_noise(sd + 2, s / (2 * feature), t / (2 * feature));
      n += 0.20 * value_noise(sd + 3, s / feature, t / feature);
      c[ch] = std::clamp(0.05 + 1.5 * (n - 0.2), 0.02, 0.98);
    }
    return c;
  }

  /// Ray parameter of the hit, or +inf.
  double intersect(const Vec3& o, const Vec3& d, double& s, double& t) const {
    const Vec3 n = u_axis.cross(v_axis);
    const double den = n.dot(d);
    if (std::abs(den) < 1e-12) return std::numeric_limits<double>::infinity();
    const double lambda = n.dot(origin - o) / den;
    if (lambda <= 0) return std::numeric_limits<double>::infinity();
    const Vec3 p = o + lambda * d - origin;
    s = p.dot(u_axis);
    t = p.dot(v_axis);
    if (s < 0 || t < 0 || s > u_len || t > v_len) return std::numeric_limits<double>::infinity();
    return lambda;
  }
};

/// Rendered views of a set of textured quads with exact depth and poses.
struct SyntheticScene {
  std::vector<Frame> frames;  // coarse_pose holds the exact pose
  std::vector<PoseSE3> poses;
  Intrinsics intrinsics;
  std::vector<TexturedQuad> quads;
  std::vector<GrayImage> depth;  // camera-z, 0 where nothing is hit
  std::vector<Vec3> points;      // exact sparse points
  std::vector<std::vector<TrackObservation>> tracks;
};

/// Camera-z depth and surface color along the ray through pixel (u, v).
inline bool trace(const std::vector<TexturedQuad>& quads, const PoseSE3& pose, const Intrinsics& k, double u, double v,
                  Vec3& color, double& depth) {
  const PoseSE3 c2w = pose.inverse();
  const Vec3 dir = c2w.rotation * k.backproject(u, v, 1.0);
  const Vec3 o = c2w.translation;
  double best = std::numeric_limits<double>::infinity();
  int hit = -1;
  double bs = 0, bt = 0;
  for (std::size_t q = 0; q < quads.size(); ++q) {
    double s = 0, t = 0;
    const double l = quads[q].intersect(o, dir, s, t);
    if (l < best) {
      best = l;
      hit = static_cast<int>(q);
      bs = s;
      bt = t;
    }
  }
  if (hit < 0) return false;
  color = quads[hit].color(bs, bt);
  depth = best;  // dir has unit camera-z
  return true;
}

/// Renders with `ss` x `ss` supersampling; depth from the pixel center ray.
inline void render_quads(const std::vector<TexturedQuad>& quads, const PoseSE3& pose, const Intrinsics& k, int ss,
                         RgbImage& image, GrayImage& depth) {
  image = RgbImage(k.width, k.height);
  depth = GrayImage(k.width, k.height);
  parallel_for(static_cast<std::size_t>(k.height), [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < k.width; ++x) {
      Vec3 acc = Vec3::Zero();
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          Vec3 c;
          double d;
          const double u = x - 0.5 + (sx + 0.5) / ss, v = y - 0.5 + (sy + 0.5) / ss;
          if (trace(quads, pose, k, u, v, c, d)) acc += c;
        }
      acc /= ss * ss;
      for (int ch = 0; ch < 3; ++ch) image(x, y, ch) = acc[ch];
      Vec3 c;
      double d = 0;
      if (trace(quads, pose, k, x, y, c, d)) depth(x, y) = d;
    }
  });
}

/// Samples surface points visible (unoccluded, in frame) from at least two
/// cameras and records their exact projections.
inline void sample_tracks(SyntheticScene& s, int n_points, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0;
  for (const auto& q : s.quads) total += q.u_len * q.v_len;
  int attempts = 0;
  while (static_cast<int>(s.points.size()) < n_points && attempts++ < 200 * n_points) {
    double pick = rng.uniform() * total;
    std::size_t qi = 0;
    while (qi + 1 < s.quads.size() && pick > s.quads[qi].u_len * s.quads[qi].v_len) {
      pick -= s.quads[qi].u_len * s.quads[qi].v_len;
      ++qi;
    }
    const TexturedQuad& q = s.quads[qi];
    const Vec3 x = q.origin + rng.uniform() * q.u_len * q.u_axis + rng.uniform() * q.v_len * q.v_axis;
    std::vector<TrackObservation> track;
    for (std::size_t c = 0; c < s.poses.size(); ++c) {
      const Vec3 pc = s.poses[c].apply(x);
      if (pc.z() <= 0.01) continue;
      const Vec2 u = s.intrinsics.project(pc);
      if (!s.intrinsics.contains(u)) continue;
      Vec3 col;
      double d;
      if (!trace(s.quads, s.poses[c], s.intrinsics, u.x(), u.y(), col, d) || d < pc.z() - 1e-6) continue;
      track.push_back({static_cast<int>(c), u, -1});
    }
    if (track.size() < 2) continue;
    s.points.push_back(x);
    s.tracks.push_back(std::move(track));
  }
}

inline void render_scene(SyntheticScene& s, int supersample, double frame_dt) {
  s.frames.clear();
  s.depth.assign(s.poses.size(), GrayImage());
  std::vector<RgbImage> imgs(s.poses.size());
  for (std::size_t c = 0; c < s.poses.size(); ++c) render_quads(s.quads, s.poses[c], s.intrinsics, supersample, imgs[c], s.depth[c]);
  for (std::size_t c = 0; c < s.poses.size(); ++c)
    s.frames.push_back(make_frame(static_cast<int>(c), frame_dt * c, std::move(imgs[c]), s.intrinsics, s.poses[c]));
}

struct PlaneSceneConfig {
  int n_views = 2;
  double baseline = 0.15;  // spacing between neighbouring cameras
  double depth = 1.0;
  int width = 320;
  int height = 240;
  double focal = 300;
  int supersample = 2;
  int sparse_points = 200;
};

/// Fronto-parallel textured plane at z = depth viewed by cameras on the x
/// axis looking down +z.
inline SyntheticScene gen_plane_scene(std::uint64_t seed, const PlaneSceneConfig& cfg = {}) {
  SyntheticScene s;
  s.intrinsics = {cfg.focal, cfg.focal, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0, cfg.width, cfg.height};
  const double span = cfg.baseline * (cfg.n_views - 1);
  for (int i = 0; i < cfg.n_views; ++i) {
    PoseSE3 p;
    p.translation = -Vec3(-span / 2 + cfg.baseline * i, 0, 0);
    s.poses.push_back(p);
  }
  const double hx = cfg.depth * cfg.width / (2 * cfg.focal) + span / 2 + 0.1;
  const double hy = cfg.depth * cfg.height / (2 * cfg.focal) + 0.1;
  TexturedQuad q;
  q.origin = Vec3(-hx, -hy, cfg.depth);
  q.u_len = 2 * hx;
  q.v_len = 2 * hy;
  q.feature = 2.0 * cfg.depth / cfg.focal;  // about two pixels per finest cell
  q.seed = seed;
  s.quads = {q};
  render_scene(s, cfg.supersample, 1.0);
  sample_tracks(s, cfg.sparse_points, seed + 1);
  return s;
}

struct RoomSceneConfig {
  int n_views = 10;
  double arc_deg = 50.0;
  double radius = 1.6;  // camera distance from the look-at point
  int width = 160;
  int height = 120;
  double focal = 150;
  int supersample = 2;
  int sparse_points = 300;
  double frame_dt = 0.3;  // seconds between frames
};

/// Floor, back wall and a box-like block: a piecewise-planar scene with
/// depth variation, seen from cameras on a horizontal arc.
inline SyntheticScene gen_room_scene(std::uint64_t seed, const RoomSceneConfig& cfg = {}) {
  SyntheticScene s;
  s.intrinsics = {cfg.focal, cfg.focal, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0, cfg.width, cfg.height};
  const double feature = 0.02;
  auto quad = [&](Vec3 o, Vec3 u, Vec3 v, double ul, double vl, std::uint64_t sd) {
    TexturedQuad q;
    q.origin = o;
    q.u_axis = u;
    q.v_axis = v;
    q.u_len = ul;
    q.v_len = vl;
    q.feature = feature;
    q.seed = seed * 31 + sd;
    s.quads.push_back(q);
  };
  // y points down: the floor is the plane y = 0.4.
  quad(Vec3(-1.2, 0.4, -0.6), Vec3::UnitX(), Vec3::UnitZ(), 2.4, 1.6, 1);         // floor
  quad(Vec3(-1.2, -0.9, 1.0), Vec3::UnitX(), Vec3::UnitY(), 2.4, 1.3, 2);         // back wall
  quad(Vec3(-0.25, -0.1, -0.05), Vec3::UnitX(), Vec3::UnitY(), 0.5, 0.5, 3);      // block front
  quad(Vec3(-0.25, -0.1, -0.05), Vec3::UnitZ(), Vec3::UnitY(), 0.4, 0.5, 4);      // block left
  quad(Vec3(0.25, -0.1, -0.05), Vec3::UnitZ(), Vec3::UnitY(), 0.4, 0.5, 5);       // block right
  quad(Vec3(-0.25, -0.1, -0.05), Vec3::UnitX(), Vec3::UnitZ(), 0.5, 0.4, 6);      // block top
  const double arc = cfg.arc_deg * std::numbers::pi / 180.0;
  const Vec3 target(0, 0.05, 0.2);
  for (int i = 0; i < cfg.n_views; ++i) {
    const double a = cfg.n_views == 1 ? 0.0 : -arc / 2 + arc * i / (cfg.n_views - 1);
    const Vec3 c = target + Vec3(cfg.radius * std::sin(a), -0.45, -cfg.radius * std::cos(a));
    s.poses.push_back(look_at(c, target));
  }
  render_scene(s, cfg.supersample, cfg.frame_dt);
  sample_tracks(s, cfg.sparse_points, seed + 7);
  return s;
}

/// Exact sparse map of a scene (ground-truth poses, points and pixels).
inline SparseMap scene_sparse_map(const SyntheticScene& s) {
  SparseMap m;
  m.poses = s.poses;
  m.intrinsics.assign(s.poses.size(), s.intrinsics);
  for (const Frame& f : s.frames) m.frame_ids.push_back(f.id);
  m.points = s.points;
  for (std::size_t j = 0; j < s.tracks.size(); ++j)
    for (const auto& o : s.tracks[j]) {
      Observation ob;
      ob.camera = o.camera;
      ob.point = static_cast<int>(j);
      ob.pixel = o.pixel;
      m.observations.push_back(ob);
    }
  return m;
}

/// Replaces every frame's coarse pose with a noisy copy (rotation sigma in
/// degrees, center sigma in meters), leaving the first frame exact.
inline void perturb_coarse_poses(SyntheticScene& s, double sigma_rot_deg, double sigma_t, std::uint64_t seed) {
  Rng rng(seed);
  const double sr = sigma_rot_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 1; i < s.frames.size(); ++i) {
    const PoseSE3& p = s.poses[i];
    PoseSE3 q;
    q.rotation = so3_exp(Vec3(rng.normal(0, sr), rng.normal(0, sr), rng.normal(0, sr))) * p.rotation;
    q.translation = -(q.rotation * (p.center() + Vec3(rng.normal(0, sigma_t), rng.normal(0, sigma_t), rng.normal(0, sigma_t))));
    s.frames[i].coarse_pose = q;
  }
}

}  // namespace pocketgs
