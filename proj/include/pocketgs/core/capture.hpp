#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/core/frame.hpp"
#include "pocketgs/core/image_io.hpp"
#include "pocketgs/core/json_io.hpp"
#include "pocketgs/core/parallel.hpp"

// Capture directory layout:
//
//   <dir>/index.json
//   {
//     "intrinsics": {...},             optional default for every frame
//     "frames": [
//       { "id": 0, "timestamp": 0.0, "image": "images/000.pfm",
//         "intrinsics": {"fx","fy","cx","cy","width","height"},
//         "pose": [[r00,r01,r02,tx],[...],[...],[0,0,0,1]] }   world-to-camera
//     ]
//   }
//
// Image paths are relative to <dir>. .pfm is read as linear RGB; .png/.ppm are
// treated as sRGB and linearized.

namespace pocketgs {

class CaptureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCaptureIndex = "index.json";

inline std::vector<Frame> load_capture(const std::filesystem::path& dir) {
  const auto index_path = dir / kCaptureIndex;
  std::ifstream in(index_path);
  if (!in) throw CaptureError("missing capture index: " + index_path.string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw CaptureError("malformed capture index " + index_path.string() + ": " + e.what());
  }

  struct Entry {
    int id;
    double timestamp;
    std::filesystem::path image;
    Intrinsics k;
    PoseSE3 pose;
  };
  std::vector<Entry> entries;
  const json& frames = index.at("frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& fj = frames[i];
    Entry e;
    e.id = fj.value("id", static_cast<int>(i));
    try {
      e.timestamp = fj.at("timestamp").get<double>();
      e.image = dir / fj.at("image").get<std::string>();
      e.k = intrinsics_from_json(fj.contains("intrinsics") ? fj.at("intrinsics") : index.at("intrinsics"));
    } catch (const json::exception& ex) {
      throw CaptureError("frame " + std::to_string(e.id) + ": " + ex.what());
    }
    if (!e.k.valid()) throw CaptureError("frame " + std::to_string(e.id) + ": invalid intrinsics");
    try {
      e.pose = PoseSE3::from_matrix(mat4_from_json(fj.at("pose")));
    } catch (const std::exception& ex) {
      throw CaptureError("frame " + std::to_string(e.id) + ": pose is not SE(3): " + ex.what());
    }
    entries.push_back(std::move(e));
  }

  std::vector<Frame> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const Entry& e = entries[i];
    RgbImage img = read_image(e.image);
    if (img.width != e.k.width || img.height != e.k.height)
      throw CaptureError("frame " + std::to_string(e.id) + ": image size does not match intrinsics: " +
                         e.image.string());
    out[i] = make_frame(e.id, e.timestamp, std::move(img), e.k, e.pose);
  });
  // Stable: equal timestamps keep index-file order.
  std::stable_sort(out.begin(), out.end(), [](const Frame& a, const Frame& b) { return a.timestamp < b.timestamp; });
  return out;
}

/// Writes frames as a capture directory with lossless PFM images.
inline void save_capture(const std::filesystem::path& dir, const std::vector<Frame>& frames) {
  std::filesystem::create_directories(dir / "images");
  json index;
  index["frames"] = json::array();
  for (const Frame& f : frames) {
    std::ostringstream name;
    name << "images/" << std::setw(4) << std::setfill('0') << f.id << ".pfm";
    write_image(dir / name.str(), f.image);
    index["frames"].push_back({{"id", f.id},
                               {"timestamp", f.timestamp},
                               {"image", name.str()},
                               {"intrinsics", to_json(f.intrinsics)},
                               {"pose", to_json(f.coarse_pose)}});
  }
  std::ofstream out(dir / kCaptureIndex);
  out << std::setprecision(17) << index.dump(2) << "\n";
}

}  // namespace pocketgs
