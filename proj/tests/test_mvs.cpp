#include <gtest/gtest.h>

#include <cstdlib>
#include <numbers>

#include "pocketgs/mvs/mvs.hpp"
#include "pocketgs/synth/textured_scene.hpp"

using namespace pocketgs;

namespace {

SparseMap map_with_depths(const std::vector<double>& depths) {
  SparseMap m;
  m.poses = {PoseSE3{}, PoseSE3{}};
  m.poses[1].translation = Vec3(-0.1, 0, 0);
  const Intrinsics k{100, 100, 50, 50, 101, 101};
  m.intrinsics = {k, k};
  m.frame_ids = {0, 1};
  for (double d : depths) m.points.push_back(Vec3(0, 0, d));
  return m;
}

// Literal SGM: each path evaluated straight from the recurrence with fresh
// storage per path, summed at the end.
std::vector<long> sgm_oracle(const CostVolume& v, int p1, int p2) {
  const int w = v.width, h = v.height, d = v.depth;
  std::vector<long> total(v.cost.size(), 0);
  const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (const auto& dir : dirs) {
    std::vector<long> l(v.cost.size(), 0);
    auto idx = [&](int x, int y, int k) { return (static_cast<std::size_t>(y) * w + x) * d + k; };
    // Visit pixels in path order so the predecessor is always ready.
    std::vector<std::pair<int, int>> order;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) order.push_back({x, y});
    if (dir[0] < 0 || dir[1] < 0) std::reverse(order.begin(), order.end());
    for (auto [x, y] : order) {
      const int px = x - dir[0], py = y - dir[1];
      for (int k = 0; k < d; ++k) {
        if (px < 0 || py < 0 || px >= w || py >= h) {
          l[idx(x, y, k)] = v.at(x, y, k);
          continue;
        }
        long mn = l[idx(px, py, 0)];
        for (int q = 1; q < d; ++q) mn = std::min(mn, l[idx(px, py, q)]);
        long best = l[idx(px, py, k)];
        if (k > 0) best = std::min(best, l[idx(px, py, k - 1)] + p1);
        if (k + 1 < d) best = std::min(best, l[idx(px, py, k + 1)] + p1);
        best = std::min(best, mn + p2);
        l[idx(x, y, k)] = v.at(x, y, k) + best - mn;
      }
    }
    for (std::size_t i = 0; i < l.size(); ++i) total[i] += l[i];
  }
  return total;
}

CostVolume random_volume(int w, int h, int d, std::uint64_t seed) {
  Rng rng(seed);
  CostVolume v(w, h, d);
  for (auto& c : v.cost) c = static_cast<std::int32_t>(rng.index(49));
  return v;
}

struct PlaneRun {
  SyntheticScene scene;
  SparseMap map;
  DepthRange range;
  DepthMap depth;
};

PlaneRun plane_run() {
  PlaneRun r;
  r.scene = gen_plane_scene(5);
  r.map = scene_sparse_map(r.scene);
  r.range = depth_range(0, r.map);
  const CensusImage t = census_transform(r.scene.frames[0].luma), f = census_transform(r.scene.frames[1].luma);
  MvsConfig cfg;
  r.depth = compute_depth_map(t, r.map.intrinsics[0], r.map.poses[0], f, r.map.intrinsics[1], r.map.poses[1], r.range, cfg);
  r.depth.camera = 0;
  return r;
}

}  // namespace

TEST(DepthRange, ConstantDepths) {
  const DepthRange r = depth_range(0, map_with_depths(std::vector<double>(30, 1.0)));
  EXPECT_DOUBLE_EQ(r.d_min, 0.6);
  EXPECT_DOUBLE_EQ(r.d_max, 1.6);
  EXPECT_FALSE(r.fallback);
  EXPECT_FALSE(r.low_support);
}

TEST(DepthRange, NearestRankQuantiles) {
  std::vector<double> d;
  for (int i = 0; i < 100; ++i) d.push_back(0.5 + 1.5 * i / 99.0);
  std::vector<double> shuffled = d;
  std::reverse(shuffled.begin(), shuffled.end());
  const DepthRange r = depth_range(0, map_with_depths(shuffled));
  // Nearest rank: ceil(0.05 * 100) = 5th and ceil(0.95 * 100) = 95th smallest.
  EXPECT_DOUBLE_EQ(r.d_min, 0.6 * d[4]);
  EXPECT_DOUBLE_EQ(r.d_max, 1.6 * d[94]);
}

TEST(DepthRange, BehindCameraFallsBack) {
  SparseMap m = map_with_depths(std::vector<double>(30, -1.0));
  const DepthRange r = depth_range(0, m);
  EXPECT_TRUE(r.fallback);
  EXPECT_DOUBLE_EQ(r.d_min, 0.05);
  EXPECT_DOUBLE_EQ(r.d_max, 5.0);
}

TEST(DepthRange, LowSupportFlagged) {
  const DepthRange r = depth_range(0, map_with_depths(std::vector<double>(8, 2.0)));
  EXPECT_FALSE(r.fallback);
  EXPECT_TRUE(r.low_support);
}

TEST(DepthRange, HypothesesInverseDepthSpaced) {
  DepthRange r;
  r.d_min = 0.5;
  r.d_max = 2.0;
  r.n_hypotheses = 7;
  const auto h = r.hypotheses();
  EXPECT_DOUBLE_EQ(h.front(), 0.5);
  EXPECT_DOUBLE_EQ(h.back(), 2.0);
  for (int k = 1; k < 7; ++k) EXPECT_NEAR(1 / h[k - 1] - 1 / h[k], 0.25, 1e-12);
}

TEST(Reference, ScoreFormula) {
  ReferenceConfig cfg;
  EXPECT_DOUBLE_EQ(reference_score(cfg.b_target, cfg.alpha_min_deg, cfg), 1.0);
  EXPECT_NEAR(reference_score(cfg.b_target + cfg.sigma_b, cfg.alpha_min_deg, cfg), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(std::exp(-0.5), 0.6065, 1e-4);
  // Below alpha_min the factor saturates at one.
  EXPECT_DOUBLE_EQ(reference_score(cfg.b_target, 1.5, cfg), 1.0);
}

TEST(Reference, LargerAngleWinsAtEqualBaseline) {
  ReferenceConfig cfg;
  const double b = 0.15;
  EXPECT_GT(reference_score(b, 8.0, cfg), reference_score(b, 4.0, cfg));

  // Two candidates at the same baseline, one seeing points twice as oblique.
  SparseMap m;
  const Intrinsics k{200, 200, 100, 100, 201, 201};
  m.poses.resize(3);
  m.poses[1].translation = Vec3(-0.15, 0, 0);
  m.poses[2].translation = Vec3(0.15, 0, 0);
  m.intrinsics = {k, k, k};
  m.frame_ids = {0, 1, 2};
  // Points near camera 1 side subtend a larger angle from (0,1) than from (0,2)
  // when they sit closer.
  m.points = {Vec3(0.0, 0, 1.0), Vec3(0.0, 0, 3.0)};
  m.observations = {{0, 0, Vec2(100, 100)}, {1, 0, Vec2(100, 100)}, {0, 1, Vec2(100, 100)}, {2, 1, Vec2(100, 100)}};
  const ReferenceChoice c = select_reference(0, {1, 2}, m, cfg);
  ASSERT_EQ(c.top.size(), 2u);
  EXPECT_GT(c.top[0].alpha_deg, c.top[1].alpha_deg);
  EXPECT_EQ(c.best, 1);
}

TEST(Reference, AngleFloorSkipsFrame) {
  SparseMap m = map_with_depths({});
  m.points = {Vec3(0, 0, 50.0)};
  m.observations = {{0, 0, Vec2(50, 50)}, {1, 0, Vec2(50.2, 50)}};
  EXPECT_EQ(select_reference(0, {1}, m).best, -1);
}

TEST(Reference, TiesGoToSmallerFrameId) {
  SparseMap m;
  const Intrinsics k{200, 200, 100, 100, 201, 201};
  m.poses.resize(3);
  m.poses[1].translation = Vec3(-0.15, 0, 0);
  m.poses[2].translation = Vec3(0.15, 0, 0);
  m.intrinsics = {k, k, k};
  m.frame_ids = {10, 30, 20};
  m.points = {Vec3(0, 0, 1.0)};
  m.observations = {{0, 0, Vec2()}, {1, 0, Vec2()}, {2, 0, Vec2()}};
  EXPECT_EQ(select_reference(0, {1, 2}, m).best, 2);
}

TEST(Census, ConstantAndExtremeCenters) {
  GrayImage g(9, 9, 0.5);
  EXPECT_EQ(census(g, 4, 4), 0u);
  g(4, 4) = 0.0;
  // No neighbour is strictly darker than the darkest center.
  EXPECT_EQ(census(g, 4, 4), 0u);
  g(4, 4) = 1.0;
  EXPECT_EQ(census(g, 4, 4), (std::uint64_t{1} << 48) - 1);
}

TEST(Census, OffsetAndMonotoneRescaleInvariant) {
  Rng rng(1);
  GrayImage g(30, 20);
  for (double& v : g.data) v = rng.uniform();
  GrayImage off = g, mono = g;
  for (double& v : off.data) v += 0.3;
  for (double& v : mono.data) v = std::pow(v, 2.2) * 3.0;
  const CensusImage a = census_transform(g), b = census_transform(off), c = census_transform(mono);
  EXPECT_EQ(a.code, b.code);
  EXPECT_EQ(a.code, c.code);
  EXPECT_EQ(a.valid, c.valid);
  EXPECT_FALSE(a.valid[a.index(2, 5)]);
  EXPECT_TRUE(a.valid[a.index(3, 3)]);
}

TEST(PlaneSweep, SelfMatchIsZero) {
  const SyntheticScene s = gen_plane_scene(2, {2, 0.15, 1.0, 64, 48, 60, 1, 0});
  const CensusImage c = census_transform(s.frames[0].luma);
  DepthRange r;
  r.d_min = 0.5;
  r.d_max = 2.0;
  r.n_hypotheses = 8;
  const CostVolume v = plane_sweep(c, s.intrinsics, s.poses[0], c, s.intrinsics, s.poses[0], r);
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x)
      for (int k = 0; k < v.depth; ++k) EXPECT_EQ(v.at(x, y, k), c.valid[c.index(x, y)] ? 0 : 48);
}

TEST(PlaneSweep, OutOfBoundsCostsMax) {
  const SyntheticScene s = gen_plane_scene(3, {2, 0.5, 1.0, 64, 48, 60, 1, 0});
  const CensusImage a = census_transform(s.frames[0].luma), b = census_transform(s.frames[1].luma);
  DepthRange r;
  r.d_min = 0.2;
  r.d_max = 0.3;
  r.n_hypotheses = 4;
  const CostVolume v = plane_sweep(a, s.intrinsics, s.poses[0], b, s.intrinsics, s.poses[1], r);
  // Camera 1 sits 0.5 m to the right; at 0.2 m the left edge of view 0 is far
  // outside view 1.
  for (int k = 0; k < 4; ++k) EXPECT_EQ(v.at(5, 24, k), 48);
}

TEST(PlaneSweep, CropMatchesBruteForceAndFindsPlane) {
  const SyntheticScene s = gen_plane_scene(4);
  const CensusImage a = census_transform(s.frames[0].luma), b = census_transform(s.frames[1].luma);
  const SparseMap m = scene_sparse_map(s);
  const DepthRange r = depth_range(0, m);
  const CostVolume v = plane_sweep(a, s.intrinsics, s.poses[0], b, s.intrinsics, s.poses[1], r);
  // Brute force on a 32x32 crop: warp each pixel by explicit world transforms.
  const PoseSE3 c2w = s.poses[0].inverse();
  int near_truth = 0, total = 0;
  for (int y = 100; y < 132; ++y)
    for (int x = 150; x < 182; ++x) {
      int best = 0;
      for (int k = 0; k < r.n_hypotheses; ++k) {
        const double d = r.hypotheses()[k];
        const Vec3 xw = c2w.rotation * Vec3((x - s.intrinsics.cx) * d / s.intrinsics.fx,
                                            (y - s.intrinsics.cy) * d / s.intrinsics.fy, d) + c2w.translation;
        const Vec3 xr = s.poses[1].rotation * xw + s.poses[1].translation;
        const double u = s.intrinsics.fx * xr.x() / xr.z() + s.intrinsics.cx;
        const double w = s.intrinsics.fy * xr.y() / xr.z() + s.intrinsics.cy;
        int expect = 48;
        const int ru = static_cast<int>(std::lround(u)), rw = static_cast<int>(std::lround(w));
        if (u >= -0.5 && w >= -0.5 && u < s.intrinsics.width - 0.5 && w < s.intrinsics.height - 0.5 &&
            b.valid[b.index(ru, rw)])
          expect = std::popcount(census(s.frames[0].luma, x, y) ^ census(s.frames[1].luma, ru, rw));
        ASSERT_EQ(v.at(x, y, k), expect);
        if (v.at(x, y, k) < v.at(x, y, best)) best = k;
      }
      const double inv_err = std::abs(1.0 / r.hypotheses()[best] - 1.0 / s.depth[0](x, y));
      near_truth += inv_err <= 0.5 * r.inv_step() + 1e-12;
      ++total;
    }
  EXPECT_GE(double(near_truth) / total, 0.8);
}

TEST(Sgm, ZeroPenaltiesGiveFourTimesCost) {
  const CostVolume v = random_volume(9, 7, 5, 1);
  const CostVolume a = sgm_aggregate(v, 0, 0);
  for (std::size_t i = 0; i < v.cost.size(); ++i) EXPECT_EQ(a.cost[i], 4 * v.cost[i]);
}

TEST(Sgm, SingleColumnHorizontalPathsAreRaw) {
  const CostVolume v = random_volume(1, 10, 6, 2);
  const CostVolume a = sgm_aggregate(v, 6, 96);
  const auto ref = sgm_oracle(v, 6, 96);
  for (std::size_t i = 0; i < v.cost.size(); ++i) EXPECT_EQ(a.cost[i], ref[i]);
  // A single row with the same costs swaps the roles of the horizontal and
  // vertical passes, so both must agree when the horizontal ones are raw.
  CostVolume row(10, 1, 6);
  for (int y = 0; y < 10; ++y)
    for (int k = 0; k < 6; ++k) row.at(y, 0, k) = v.at(0, y, k);
  const CostVolume ar = sgm_aggregate(row, 6, 96);
  for (int y = 0; y < 10; ++y)
    for (int k = 0; k < 6; ++k) EXPECT_EQ(a.at(0, y, k), ar.at(y, 0, k));
}

TEST(Sgm, MatchesRecurrenceOracle) {
  for (std::uint64_t seed = 3; seed < 13; ++seed) {
    const CostVolume v = random_volume(8, 8, 4, seed);
    const CostVolume a = sgm_aggregate(v, 6, 96);
    const auto ref = sgm_oracle(v, 6, 96);
    for (std::size_t i = 0; i < v.cost.size(); ++i) ASSERT_EQ(a.cost[i], ref[i]) << "seed " << seed;
  }
}

TEST(Sgm, PenaltyFreeWinnerIsRawWinner) {
  const CostVolume v = random_volume(12, 9, 16, 20);
  const CostVolume a = sgm_aggregate(v, 0, 0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x) {
      int kv = 0, ka = 0;
      for (int k = 1; k < 16; ++k) {
        if (v.at(x, y, k) < v.at(x, y, kv)) kv = k;
        if (a.at(x, y, k) < a.at(x, y, ka)) ka = k;
      }
      EXPECT_EQ(kv, ka);
    }
  for (auto c : sgm_aggregate(v, 6, 96).cost) EXPECT_GE(c, 0);
}

TEST(ExtractDepth, UniqueZeroWinner) {
  CostVolume v(1, 1, 8);
  for (int k = 0; k < 8; ++k) v.at(0, 0, k) = 48;
  v.at(0, 0, 3) = 0;
  DepthRange r;
  r.n_hypotheses = 8;
  const DepthMap d = extract_depth(v, r);
  EXPECT_DOUBLE_EQ(d.confidence[0], 1.0);
  EXPECT_NEAR(d.depth[0], r.depth(3), 1e-12);
}

TEST(ExtractDepth, TwoEqualMinimaRejected) {
  CostVolume v(1, 1, 8);
  for (int k = 0; k < 8; ++k) v.at(0, 0, k) = 40;
  v.at(0, 0, 1) = 10;
  v.at(0, 0, 6) = 10;
  DepthRange r;
  r.n_hypotheses = 8;
  const DepthMap d = extract_depth(v, r);
  EXPECT_EQ(d.confidence[0], 0.0);
  EXPECT_EQ(d.depth[0], 0.0);
}

TEST(ExtractDepth, PartiallyCoveredPixelRejected) {
  CostVolume v(2, 1, 8);
  for (int x = 0; x < 2; ++x)
    for (int k = 0; k < 8; ++k) v.at(x, 0, k) = k == 2 ? 0 : 48;
  v.covered = {1, 0};
  DepthRange r;
  r.n_hypotheses = 8;
  const DepthMap d = extract_depth(v, r);
  EXPECT_GT(d.depth[0], 0.0);
  EXPECT_EQ(d.depth[1], 0.0);
}

TEST(ExtractDepth, FlatCostIsInvalid) {
  CostVolume v(1, 1, 8);
  for (int k = 0; k < 8; ++k) v.at(0, 0, k) = 17;
  DepthRange r;
  r.n_hypotheses = 8;
  EXPECT_EQ(extract_depth(v, r).depth[0], 0.0);
}

TEST(ExtractDepth, PlaneSceneWithinOneStep) {
  const PlaneRun run = plane_run();
  int valid = 0, good = 0;
  for (int y = 0; y < run.depth.height; ++y)
    for (int x = 0; x < run.depth.width; ++x) {
      const double d = run.depth.depth[run.depth.index(x, y)];
      if (d <= 0) continue;
      EXPECT_GE(d, run.range.d_min);
      EXPECT_LE(d, run.range.d_max);
      ++valid;
      good += std::abs(1 / d - 1 / run.scene.depth[0](x, y)) <= run.range.inv_step();
    }
  ASSERT_GT(valid, run.depth.width * run.depth.height / 4);
  EXPECT_GE(double(good) / valid, 0.9);
}

TEST(Fuse, PrincipalPointPixel) {
  const Intrinsics k{100, 100, 10, 8, 21, 17};
  PoseSE3 pose = look_at(Vec3(0.3, -0.2, 0.1), Vec3(1, 0.5, 2));
  DepthMap dm(21, 17);
  dm.camera = 0;
  dm.depth[dm.index(10, 8)] = 1.0;
  dm.depth[dm.index(0, 0)] = 0.04;
  RgbImage img(21, 17, 0.25);
  const auto cloud = fuse({dm}, {&img}, {pose}, {k});
  ASSERT_EQ(cloud.size(), 1u);
  const Vec3 axis = pose.rotation.transpose() * Vec3::UnitZ();
  EXPECT_LT((cloud[0].position - (pose.center() + axis)).norm(), 1e-12);
  EXPECT_EQ(cloud[0].color, Vec3(0.25, 0.25, 0.25));
  EXPECT_LT((cloud[0].view_origin - pose.center()).norm(), 1e-12);
}

TEST(Fuse, PointsReprojectAndLieOnPlane) {
  const PlaneRun run = plane_run();
  FusionConfig cfg;
  cfg.voxel = 0;
  const auto cloud = fuse({run.depth}, {&run.scene.frames[0].image}, run.map.poses, run.map.intrinsics, cfg);
  ASSERT_EQ(static_cast<int>(cloud.size()), run.depth.valid_count());
  std::size_t i = 0;
  double sq = 0;
  for (int y = 0; y < run.depth.height; ++y)
    for (int x = 0; x < run.depth.width; ++x) {
      if (run.depth.depth[run.depth.index(x, y)] <= 0) continue;
      const Vec2 u = run.scene.intrinsics.project(run.scene.poses[0].apply(cloud[i].position));
      EXPECT_LT((u - Vec2(x, y)).norm(), 1e-6);
      sq += std::pow(cloud[i].position.z() - 1.0, 2);
      ++i;
    }
  const double step_m = 1.0 * 1.0 * run.range.inv_step();  // d^2 * inverse-depth step at the plane
  EXPECT_LT(std::sqrt(sq / cloud.size()), 2 * step_m);
}

TEST(Fuse, VoxelKeepsFirstPointPerCell) {
  const Intrinsics k{100, 100, 10, 8, 21, 17};
  DepthMap dm(21, 17);
  dm.camera = 0;
  dm.depth[dm.index(10, 8)] = 1.0;
  dm.depth[dm.index(11, 8)] = 1.0;  // 1 cm apart at 1 m
  const auto fine = fuse({dm}, {nullptr}, {PoseSE3{}}, {k}, {0.05, 5.0, 0.005});
  EXPECT_EQ(fine.size(), 2u);
  const auto coarse = fuse({dm}, {nullptr}, {PoseSE3{}}, {k}, {0.05, 5.0, 0.5});
  ASSERT_EQ(coarse.size(), 1u);
  EXPECT_EQ(coarse[0].position, fine[0].position);
}

TEST(Mvs, DeterministicAcrossThreadCounts) {
  const SyntheticScene s = gen_plane_scene(6, {3, 0.1, 1.0, 96, 72, 90, 1, 100});
  const SparseMap m = scene_sparse_map(s);
  std::vector<const GrayImage*> l;
  std::vector<const RgbImage*> c;
  for (const auto& f : s.frames) {
    l.push_back(&f.luma);
    c.push_back(&f.image);
  }
  setenv("POCKETGS_THREADS", "1", 1);
  const MvsResult a = run_mvs(m, l, c);
  setenv("POCKETGS_THREADS", "3", 1);
  const MvsResult b = run_mvs(m, l, c);
  unsetenv("POCKETGS_THREADS");
  ASSERT_EQ(a.cloud.size(), b.cloud.size());
  ASSERT_FALSE(a.cloud.empty());
  for (std::size_t i = 0; i < a.cloud.size(); ++i) EXPECT_EQ(a.cloud[i].position, b.cloud[i].position);
  for (std::size_t i = 0; i < a.depth_maps.size(); ++i) EXPECT_EQ(a.depth_maps[i].depth, b.depth_maps[i].depth);
}
