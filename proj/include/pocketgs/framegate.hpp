#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pocketgs/core/frame.hpp"
#include "pocketgs/core/parallel.hpp"

namespace pocketgs {

struct GateConfig {
  double tau_d = 0.05;        // meters
  int window_len = 8;         // frames
  double window_time = 0.25;  // seconds
  double margin = 0.05;       // replacement margin r
  int grid = 160;             // samples per axis
  int delta = 2;              // luma step in pixels

  void validate() const {
    if (!(tau_d > 0) || window_len < 1 || margin < 0 || grid < 1 || delta < 1 || window_time < 0)
      throw std::invalid_argument("invalid GateConfig");
  }
};

struct KeyframeSet {
  std::vector<int> ids;           // selected frame ids in stream order
  std::vector<double> sharpness;  // per input frame, input order
  int accepted = 0;
  int rejected_blur = 0;          // entered a window but lost to a sharper frame
  int rejected_displacement = 0;  // failed the displacement gate
};

inline double displacement(const PoseSE3& curr, const PoseSE3& last) { return (curr.center() - last.center()).norm(); }

/// Mean of |I(x+d,y)-I(x,y)| + |I(x,y+d)-I(x,y)| over a uniform lattice.
/// Samples whose +d neighbour leaves the image are dropped.
inline double sharpness(const GrayImage& luma, const GateConfig& cfg) {
  const int gx = std::min(cfg.grid, luma.width);
  const int gy = std::min(cfg.grid, luma.height);
  double sum = 0.0;
  long n = 0;
  for (int j = 0; j < gy; ++j) {
    const int y = static_cast<int>((j + 0.5) * luma.height / gy);
    if (y + cfg.delta >= luma.height) continue;
    for (int i = 0; i < gx; ++i) {
      const int x = static_cast<int>((i + 0.5) * luma.width / gx);
      if (x + cfg.delta >= luma.width) continue;
      const double c = luma(x, y);
      sum += std::abs(luma(x + cfg.delta, y) - c) + std::abs(luma(x, y + cfg.delta) - c);
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline double sharpness(const Frame& frame, const GateConfig& cfg) { return sharpness(frame.luma, cfg); }

/// Streaming keyframe selection over timestamp-ordered frames. Every
/// candidate must clear the displacement gate against the last committed
/// keyframe (the first window is ungated). A window closes when it holds
/// window_len frames or a new frame arrives more than window_time after the
/// window opened; closing commits its sharpest member.
inline KeyframeSet select_keyframes(const std::vector<Frame>& frames, const GateConfig& cfg) {
  cfg.validate();
  KeyframeSet out;
  out.sharpness.resize(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) { out.sharpness[i] = sharpness(frames[i], cfg); });

  std::optional<PoseSE3> last;
  struct Window {
    std::size_t best = 0;
    double opened = 0.0;
    int size = 0;
  };
  std::optional<Window> win;

  auto commit = [&] {
    out.ids.push_back(frames[win->best].id);
    last = frames[win->best].coarse_pose;
    out.rejected_blur += win->size - 1;
    win.reset();
  };

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    if (win && f.timestamp - win->opened > cfg.window_time) commit();
    if (last && displacement(f.coarse_pose, *last) < cfg.tau_d) {
      ++out.rejected_displacement;
      continue;
    }
    if (!win) {
      win = Window{i, f.timestamp, 1};
    } else {
      ++win->size;
      if (out.sharpness[i] > (1.0 + cfg.margin) * out.sharpness[win->best]) win->best = i;
    }
    if (win->size >= cfg.window_len) commit();
  }
  if (win) commit();
  out.accepted = static_cast<int>(out.ids.size());
  return out;
}

}  // namespace pocketgs
