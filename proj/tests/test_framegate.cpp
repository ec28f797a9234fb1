#include <gtest/gtest.h>

#include "pocketgs/core/random.hpp"
#include "pocketgs/framegate.hpp"

using namespace pocketgs;

namespace {

GrayImage noise_luma(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage g(w, h);
  for (double& v : g.data) v = rng.uniform();
  return g;
}

Frame gray_frame(int id, double ts, const GrayImage& luma, double gain, const Vec3& center) {
  RgbImage img(luma.width, luma.height);
  for (std::size_t i = 0; i < luma.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) img.data[3 * i + c] = gain * luma.data[i];
  PoseSE3 pose;
  pose.translation = -center;
  return make_frame(id, ts, img, {50, 50, 16, 12, luma.width, luma.height}, pose);
}

// Dense evaluation of the sharpness sum over the same lattice, written
// independently of the library loop.
double sharpness_oracle(const GrayImage& g, int grid, int delta) {
  const int gx = std::min(grid, g.width), gy = std::min(grid, g.height);
  std::vector<int> xs, ys;
  for (int i = 0; i < gx; ++i) xs.push_back(static_cast<int>((i + 0.5) * g.width / gx));
  for (int j = 0; j < gy; ++j) ys.push_back(static_cast<int>((j + 0.5) * g.height / gy));
  double s = 0;
  int n = 0;
  for (int y : ys)
    for (int x : xs) {
      if (x + delta >= g.width || y + delta >= g.height) continue;
      s += std::abs(g(x + delta, y) - g(x, y)) + std::abs(g(x, y + delta) - g(x, y));
      ++n;
    }
  return s / n;
}

}  // namespace

TEST(Displacement, Basics) {
  EXPECT_EQ(displacement(PoseSE3::identity(), PoseSE3::identity()), 0.0);
  PoseSE3 a, b;
  a.translation = Vec3(0.03, 0.04, 0.0);
  EXPECT_NEAR(displacement(a, b), 0.05, 1e-15);
}

TEST(Displacement, BelowThresholdNotConsidered) {
  const GrayImage tex = noise_luma(32, 24, 1);
  GateConfig cfg;
  cfg.window_len = 1;
  std::vector<Frame> frames = {gray_frame(0, 0.0, tex, 1.0, Vec3::Zero()),
                               gray_frame(1, 1.0, tex, 1.0, Vec3(0.049, 0, 0))};
  const KeyframeSet ks = select_keyframes(frames, cfg);
  EXPECT_EQ(ks.ids, std::vector<int>{0});
  EXPECT_EQ(ks.rejected_displacement, 1);
  frames[1] = gray_frame(1, 1.0, tex, 1.0, Vec3(0.05, 0, 0));
  EXPECT_EQ(select_keyframes(frames, cfg).ids, (std::vector<int>{0, 1}));
}

TEST(Sharpness, ConstantIsZero) {
  GrayImage g(40, 30, 0.7);
  EXPECT_EQ(sharpness(g, GateConfig{}), 0.0);
}

TEST(Sharpness, StepEdgeMatchesDenseOracle) {
  GrayImage g(320, 200, 0.0);
  for (int y = 0; y < g.height; ++y)
    for (int x = 161; x < g.width; ++x) g(x, y) = 1.0;
  GateConfig cfg;
  const double s = sharpness(g, cfg);
  EXPECT_NEAR(s, sharpness_oracle(g, cfg.grid, cfg.delta), 1e-15);
  EXPECT_GT(s, 0.0);
  // A unit step: every contributing sample straddles the edge in x only.
  const int gx = 160;
  int straddle = 0;
  for (int i = 0; i < gx; ++i) {
    const int x = static_cast<int>((i + 0.5) * 320 / gx);
    if (x + 2 < 320 && x <= 160 && x + 2 >= 161) ++straddle;
  }
  int valid_cols = 0;
  for (int i = 0; i < gx; ++i)
    if (static_cast<int>((i + 0.5) * 320 / gx) + 2 < 320) ++valid_cols;
  EXPECT_NEAR(s, double(straddle) / valid_cols, 1e-12);
}

TEST(Sharpness, RandomImageMatchesOracle) {
  const GrayImage g = noise_luma(97, 61, 4);
  for (int d : {1, 2, 3}) {
    GateConfig cfg;
    cfg.delta = d;
    cfg.grid = 40;
    EXPECT_NEAR(sharpness(g, cfg), sharpness_oracle(g, 40, d), 1e-12);
  }
}

TEST(Sharpness, BlurReducesScore) {
  const GrayImage g = noise_luma(200, 160, 2);
  EXPECT_GT(sharpness(g, GateConfig{}), sharpness(box_blur(g, 2), GateConfig{}));
}

TEST(Sharpness, ShiftByStrideIsStable) {
  // Periodic texture with period 8; the lattice stride is 2 on a 320 wide image.
  GrayImage g(320, 320), shifted(320, 320);
  for (int y = 0; y < 320; ++y)
    for (int x = 0; x < 320; ++x) {
      auto f = [](int u, int v) { return 0.5 + 0.25 * std::sin(u * 0.785398) * std::cos(v * 0.785398); };
      g(x, y) = f(x, y);
      shifted(x, y) = f(x + 2, y);
    }
  const double a = sharpness(g, GateConfig{}), b = sharpness(shifted, GateConfig{});
  EXPECT_LT(std::abs(a - b) / a, 0.05);
}

TEST(Sharpness, ScalesLinearlyWithLuma) {
  const GrayImage g = noise_luma(64, 48, 8);
  GrayImage h = g;
  for (double& v : h.data) v *= 0.37;
  EXPECT_NEAR(sharpness(h, GateConfig{}), 0.37 * sharpness(g, GateConfig{}), 1e-12);
}

namespace {

// Two frames in one window with sharpness ratio `ratio`; returns selected ids.
std::vector<int> window_pick(double ratio) {
  const GrayImage tex = noise_luma(64, 48, 3);
  GateConfig cfg;
  cfg.window_len = 2;
  cfg.window_time = 10.0;
  std::vector<Frame> frames = {gray_frame(0, 0.0, tex, 0.5, Vec3::Zero()),
                               gray_frame(1, 0.01, tex, 0.5 * ratio, Vec3(0.001, 0, 0))};
  return select_keyframes(frames, cfg).ids;
}

}  // namespace

TEST(SelectKeyframes, ReplacementMargin) {
  EXPECT_EQ(window_pick(1.04), std::vector<int>{0});
  EXPECT_EQ(window_pick(1.06), std::vector<int>{1});
}

TEST(SelectKeyframes, EmptyInput) { EXPECT_TRUE(select_keyframes({}, GateConfig{}).ids.empty()); }

TEST(SelectKeyframes, StaticCameraSelectsOnce) {
  std::vector<Frame> frames;
  for (int i = 0; i < 30; ++i) frames.push_back(gray_frame(i, 0.05 * i, noise_luma(32, 24, 100 + i), 1.0, Vec3::Zero()));
  const KeyframeSet ks = select_keyframes(frames, GateConfig{});
  ASSERT_EQ(ks.ids.size(), 1u);
  int best = 0;
  for (int i = 1; i < 8; ++i)
    if (ks.sharpness[i] > 1.05 * ks.sharpness[best]) best = i;
  EXPECT_EQ(ks.ids[0], best);
}

namespace {

std::vector<Frame> walk(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Frame> frames;
  Vec3 c = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    c += Vec3(rng.uniform(0, 0.03), rng.uniform(-0.01, 0.01), 0);
    frames.push_back(gray_frame(i, 0.033 * i, noise_luma(48, 32, seed * 1000 + i), rng.uniform(0.5, 1.0), c));
  }
  return frames;
}

}  // namespace

TEST(SelectKeyframes, ConsecutiveKeyframesPassGate) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto frames = walk(60, seed);
    const KeyframeSet ks = select_keyframes(frames, GateConfig{});
    ASSERT_FALSE(ks.ids.empty());
    for (std::size_t k = 1; k < ks.ids.size(); ++k) {
      EXPECT_LT(ks.ids[k - 1], ks.ids[k]);
      EXPECT_GE(displacement(frames[ks.ids[k]].coarse_pose, frames[ks.ids[k - 1]].coarse_pose), 0.05);
    }
  }
}

TEST(SelectKeyframes, InvariantToLumaScale) {
  const auto frames = walk(50, 7);
  auto scaled = frames;
  for (Frame& f : scaled) {
    for (double& v : f.image.data) v *= 0.6;
    f.luma = luma_of(f.image);
  }
  EXPECT_EQ(select_keyframes(frames, GateConfig{}).ids, select_keyframes(scaled, GateConfig{}).ids);
}

TEST(SelectKeyframes, AppendingRedundantBlurryFramesIsHarmless) {
  auto frames = walk(40, 9);
  const auto base = select_keyframes(frames, GateConfig{}).ids;
  const Frame last = frames[base.back()];
  // Frames at the last keyframe's pose, much blurrier, arriving after the
  // final window has closed.
  double ts = frames.back().timestamp + 1.0;
  for (int i = 0; i < 5; ++i) {
    GrayImage flat(last.luma.width, last.luma.height, 0.5);
    Frame f = gray_frame(100 + i, ts + 0.01 * i, flat, 1.0, last.coarse_pose.center());
    frames.push_back(f);
  }
  EXPECT_EQ(select_keyframes(frames, GateConfig{}).ids, base);
}
