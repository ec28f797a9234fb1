#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/core/geometry.hpp"
#include "pocketgs/core/json_io.hpp"

namespace pocketgs {

struct Observation {
  int camera = 0;
  int point = 0;
  Vec2 pixel = Vec2::Zero();
  Mat2 info = Mat2::Identity();  // inverse pixel covariance
  int tag = -1;                  // caller bookkeeping, carried through BA
};

/// Keyframe poses (world-to-camera), their intrinsics and frame ids, plus
/// triangulated points and the 2D observations that tie them together.
struct SparseMap {
  std::vector<PoseSE3> poses;
  std::vector<Intrinsics> intrinsics;
  std::vector<int> frame_ids;
  std::vector<Vec3> points;
  std::vector<Observation> observations;

  int num_cameras() const { return static_cast<int>(poses.size()); }
  int num_points() const { return static_cast<int>(points.size()); }

  int camera_of_frame(int frame_id) const {
    for (std::size_t i = 0; i < frame_ids.size(); ++i)
      if (frame_ids[i] == frame_id) return static_cast<int>(i);
    return -1;
  }

  /// Throws std::logic_error when an observation references a missing camera
  /// or point, a point has fewer than two observations, or an information
  /// matrix is not symmetric PSD.
  void validate() const {
    if (intrinsics.size() != poses.size() || frame_ids.size() != poses.size())
      throw std::logic_error("SparseMap: per-camera arrays differ in length");
    std::vector<int> count(points.size(), 0);
    for (const auto& o : observations) {
      if (o.camera < 0 || o.camera >= num_cameras() || o.point < 0 || o.point >= num_points())
        throw std::logic_error("SparseMap: observation references invalid index");
      if (std::abs(o.info(0, 1) - o.info(1, 0)) > 1e-12 || o.info(0, 0) < 0 || o.info(1, 1) < 0 ||
          o.info.determinant() < -1e-12)
        throw std::logic_error("SparseMap: information matrix is not PSD");
      ++count[o.point];
    }
    for (std::size_t j = 0; j < count.size(); ++j)
      if (count[j] < 2) throw std::logic_error("SparseMap: point " + std::to_string(j) + " has < 2 observations");
  }

  /// Drops points with fewer than two observations and compacts indices.
  void compact() {
    std::vector<int> count(points.size(), 0);
    for (const auto& o : observations) ++count[o.point];
    std::vector<int> remap(points.size(), -1);
    std::vector<Vec3> kept;
    for (std::size_t j = 0; j < points.size(); ++j)
      if (count[j] >= 2) {
        remap[j] = static_cast<int>(kept.size());
        kept.push_back(points[j]);
      }
    std::vector<Observation> obs;
    for (auto o : observations)
      if (remap[o.point] >= 0) {
        o.point = remap[o.point];
        obs.push_back(o);
      }
    points = std::move(kept);
    observations = std::move(obs);
  }
};

inline json to_json(const SparseMap& m) {
  json j;
  j["cameras"] = json::array();
  for (int i = 0; i < m.num_cameras(); ++i)
    j["cameras"].push_back(
        {{"frame_id", m.frame_ids[i]}, {"intrinsics", to_json(m.intrinsics[i])}, {"pose", to_json(m.poses[i])}});
  j["points"] = json::array();
  for (const auto& p : m.points) j["points"].push_back({p.x(), p.y(), p.z()});
  j["observations"] = json::array();
  for (const auto& o : m.observations)
    j["observations"].push_back({{"camera", o.camera},
                                 {"point", o.point},
                                 {"pixel", {o.pixel.x(), o.pixel.y()}},
                                 {"info", {o.info(0, 0), o.info(0, 1), o.info(1, 1)}}});
  return j;
}

inline SparseMap sparse_map_from_json(const json& j) {
  SparseMap m;
  for (const auto& c : j.at("cameras")) {
    m.frame_ids.push_back(c.at("frame_id").get<int>());
    m.intrinsics.push_back(intrinsics_from_json(c.at("intrinsics")));
    m.poses.push_back(PoseSE3::from_matrix(mat4_from_json(c.at("pose"))));
  }
  for (const auto& p : j.at("points")) m.points.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  for (const auto& oj : j.at("observations")) {
    Observation o;
    o.camera = oj.at("camera").get<int>();
    o.point = oj.at("point").get<int>();
    o.pixel = {oj.at("pixel")[0].get<double>(), oj.at("pixel")[1].get<double>()};
    if (oj.contains("info")) {
      const auto& inf = oj.at("info");
      o.info << inf[0].get<double>(), inf[1].get<double>(), inf[1].get<double>(), inf[2].get<double>();
    }
    m.observations.push_back(o);
  }
  m.validate();
  return m;
}

inline void save_sparse_map(const SparseMap& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(m).dump(1) << "\n";
}

inline SparseMap load_sparse_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  in >> j;
  return sparse_map_from_json(j);
}

}  // namespace pocketgs
