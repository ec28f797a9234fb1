#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "pocketgs/pipeline.hpp"
#include "pocketgs/synth/textured_scene.hpp"

using namespace pocketgs;
namespace fs = std::filesystem;

namespace {

std::vector<Frame> small_capture(int views = 6) {
  RoomSceneConfig rc;
  rc.n_views = views;
  rc.width = 96;
  rc.height = 72;
  rc.focal = 90;
  SyntheticScene s = gen_room_scene(5, rc);
  perturb_coarse_poses(s, 0.5, 0.01, 6);
  return s.frames;
}

PipelineConfig small_config(int iters = 40) {
  PipelineConfig cfg;
  cfg.train.iterations = iters;
  cfg.mvs_cfg.fusion.voxel = 0.02;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pocketgs_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct ThreadsEnv {
  explicit ThreadsEnv(const char* n) {
    if (const char* v = std::getenv("POCKETGS_THREADS")) old = v;
    setenv("POCKETGS_THREADS", n, 1);
  }
  ~ThreadsEnv() {
    if (old.empty())
      unsetenv("POCKETGS_THREADS");
    else
      setenv("POCKETGS_THREADS", old.c_str(), 1);
  }
  std::string old;
};

}  // namespace

TEST(Pipeline, FullRunReport) {
  const RunReport r = run_pipeline(small_capture(), small_config());
  ASSERT_TRUE(r.ok) << r.error;
  std::vector<std::string> names;
  for (const auto& s : r.stages) {
    names.push_back(s.name);
    EXPECT_TRUE(s.ran) << s.name;
  }
  EXPECT_EQ(names, (std::vector<std::string>{"load", "gate", "sparse", "ba", "mvs", "init", "train", "eval"}));
  EXPECT_EQ(r.t_total, r.t_geom + r.t_train);
  double geom = 0;
  for (const auto& s : r.stages)
    if (s.name != "train" && s.name != "eval") geom += s.seconds;
  EXPECT_EQ(r.t_geom, geom);
  EXPECT_EQ(r.t_train, r.stage("train")->seconds);
  EXPECT_EQ(r.iterations, 40);
  EXPECT_EQ(r.stage("init")->detail["seeds"].get<std::size_t>(), r.gaussians);
  EXPECT_EQ(r.stage("train")->detail["gaussians"].get<std::size_t>(), r.gaussians);
  EXPECT_FALSE(r.sparse_fallback);
  EXPECT_EQ(r.test_ids, (std::vector<int>{0}));
  EXPECT_EQ(r.train_ids, (std::vector<int>{1, 2, 3, 4, 5}));
  ASSERT_EQ(r.views.size(), 1u);
  EXPECT_GT(r.views[0].final.psnr, r.views[0].initial.psnr);
  EXPECT_GT(r.peak_bytes, 0u);
}

TEST(Pipeline, HoldoutEveryEighthKeyframe) {
  PipelineConfig cfg = small_config(0);
  const RunReport r = run_pipeline(small_capture(10), cfg);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.test_ids, (std::vector<int>{0, 8}));
  EXPECT_EQ(r.train_ids, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 9}));
  // No training: Theta* is Theta_0.
  for (const auto& v : r.views) EXPECT_EQ(v.final.psnr, v.initial.psnr);
}

TEST(Pipeline, SkipMvsFallsBackToSparsePoints) {
  PipelineConfig cfg = small_config(5);
  cfg.mvs = false;
  const RunReport r = run_pipeline(small_capture(), cfg);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_TRUE(r.sparse_fallback);
  bool noted = false;
  for (const auto& w : r.warnings) noted |= w.find("sparse") != std::string::npos;
  EXPECT_TRUE(noted);
  const json& mvs = r.stage("mvs")->detail;
  EXPECT_TRUE(mvs["sparse_fallback"].get<bool>());
  EXPECT_EQ(mvs["cloud_points"].get<std::size_t>(), r.gaussians);
  // Every training-view sparse point, nothing more.
  EXPECT_LE(r.gaussians, r.stage("ba")->detail["points"].get<std::size_t>());
}

TEST(Pipeline, NoPriorInitChangesOnlyInitAndLater) {
  const auto frames = small_capture();
  PipelineConfig a = small_config(5), b = small_config(5);
  a.output = scratch("prior_on");
  b.output = scratch("prior_off");
  b.prior_init = false;
  const RunReport ra = run_pipeline(frames, a), rb = run_pipeline(frames, b);
  ASSERT_TRUE(ra.ok && rb.ok);
  EXPECT_FALSE(rb.stage("init")->detail["prior"].get<bool>());
  EXPECT_EQ(slurp(a.output / "dense.ply"), slurp(b.output / "dense.ply"));
  EXPECT_EQ(slurp(a.output / "sparse_map.json"), slurp(b.output / "sparse_map.json"));
  EXPECT_NE(slurp(a.output / "theta0.ply"), slurp(b.output / "theta0.ply"));
}

TEST(Pipeline, ArtifactsWritten) {
  PipelineConfig cfg = small_config(4);
  cfg.output = scratch("artifacts");
  cfg.save_every = 2;
  cfg.dump_depth = true;
  const RunReport r = run_pipeline(small_capture(), cfg);
  ASSERT_TRUE(r.ok) << r.error;
  for (const char* f : {"report.json", "poses.json", "sparse_map.json", "dense.ply", "theta0.ply", "theta_star.ply",
                        "renders/frame_0000.pfm", "renders/frame_0000.png", "gt/frame_0000.pfm",
                        "snapshots/iter_2.ply", "snapshots/iter_4.ply"})
    EXPECT_TRUE(fs::exists(cfg.output / f)) << f;
  EXPECT_FALSE(fs::is_empty(cfg.output / "depth"));
  EXPECT_EQ(slurp(cfg.output / "snapshots/iter_4.ply"), slurp(cfg.output / "theta_star.ply"));
  std::ifstream in(cfg.output / "report.json");
  const json j = json::parse(in);
  EXPECT_EQ(j["time"]["total"].get<double>(), j["time"]["geom"].get<double>() + j["time"]["train"].get<double>());
  // Held-out render written is the one scored.
  const RgbImage rendered = read_image(cfg.output / "renders/frame_0000.pfm");
  const RgbImage truth = read_image(cfg.output / "gt/frame_0000.pfm");
  EXPECT_NEAR(psnr(rendered, truth), r.views[0].final.psnr, 1e-3);
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
  const auto frames = small_capture();
  PipelineConfig a = small_config(10), b = small_config(10);
  a.output = scratch("det_1");
  b.output = scratch("det_3");
  RunReport ra, rb;
  {
    ThreadsEnv env("1");
    ra = run_pipeline(frames, a);
  }
  {
    ThreadsEnv env("3");
    rb = run_pipeline(frames, b);
  }
  ASSERT_TRUE(ra.ok && rb.ok);
  EXPECT_EQ(to_json(ra, false).dump(), to_json(rb, false).dump());
  for (const char* f : {"dense.ply", "theta0.ply", "theta_star.ply", "sparse_map.json", "poses.json"})
    EXPECT_EQ(slurp(a.output / f), slurp(b.output / f)) << f;
}

TEST(Pipeline, FailingStageIsReported) {
  PipelineConfig cfg = small_config(1);
  cfg.output = scratch("fail");
  const RunReport empty = run_pipeline({}, cfg);
  EXPECT_FALSE(empty.ok);
  EXPECT_EQ(empty.failed_stage, "load");

  auto frames = small_capture(2);
  frames.resize(1);
  const RunReport one = run_pipeline(frames, cfg);
  EXPECT_FALSE(one.ok);
  EXPECT_EQ(one.failed_stage, "gate");
  std::ifstream in(cfg.output / "report.json");
  const json j = json::parse(in);
  EXPECT_EQ(j["failed_stage"], "gate");
  EXPECT_EQ(j["time"]["total"].get<double>(), j["time"]["geom"].get<double>() + j["time"]["train"].get<double>());
}

TEST(Pipeline, RenderResolutionOverride) {
  PipelineConfig cfg = small_config(2);
  cfg.width = 48;
  cfg.height = 36;
  cfg.output = scratch("res");
  const RunReport r = run_pipeline(small_capture(), cfg);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.width, 48);
  const RgbImage img = read_image(cfg.output / "renders/frame_0000.pfm");
  EXPECT_EQ(img.width, 48);
  EXPECT_EQ(img.height, 36);
}

TEST(Pipeline, RescaleKeepsPixelCenterConvention) {
  const Intrinsics k{100, 100, 47.5, 35.5, 96, 72};
  const Intrinsics h = detail::rescale(k, 48, 36);
  EXPECT_DOUBLE_EQ(h.fx, 50);
  EXPECT_DOUBLE_EQ(h.cx, 23.5);  // (w - 1) / 2 stays the image center
  EXPECT_DOUBLE_EQ(h.cy, 17.5);
  RgbImage img(4, 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = 0.25;
  const RgbImage half = detail::resample(img, 2, 2);
  for (double v : half.data) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Pipeline, RunsFromCaptureDirectory) {
  const fs::path dir = scratch("capture");
  save_capture(dir, small_capture(3));
  PipelineConfig cfg = small_config(2);
  cfg.capture = dir;
  const RunReport r = run_pipeline(cfg);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.keyframes, (std::vector<int>{0, 1, 2}));
}
