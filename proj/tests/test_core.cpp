#include <gtest/gtest.h>

#include <filesystem>
#include <limits>

#include "pocketgs/core/capture.hpp"
#include "pocketgs/core/ply.hpp"
#include "pocketgs/core/random.hpp"

using namespace pocketgs;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pocketgs_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PoseSE3 random_pose(Rng& rng) {
  PoseSE3 p;
  p.rotation = so3_exp(Vec3(rng.normal(), rng.normal(), rng.normal()));
  p.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
  return p;
}

Intrinsics small_k(int w = 6, int h = 4) { return {5.0, 5.0, 2.5, 1.5, w, h}; }

}  // namespace

TEST(Luma, WhiteAndRed) {
  RgbImage white(3, 2, 1.0);
  for (double v : luma_of(white).data) EXPECT_NEAR(v, 1.0, 1e-12);
  RgbImage red(1, 1);
  red(0, 0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(luma_of(red)(0, 0), 0.299);
}

TEST(Luma, MatchesPerPixelLoop) {
  Rng rng(3);
  RgbImage img(17, 9);
  for (double& v : img.data) v = rng.uniform();
  const GrayImage l = luma_of(img);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double ref = 0.299 * img(x, y, 0) + 0.587 * img(x, y, 1) + 0.114 * img(x, y, 2);
      EXPECT_NEAR(l(x, y), ref, 1e-6);
    }
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const PoseSE3 t = random_pose(rng);
    const PoseSE3 e = t * t.inverse();
    EXPECT_LT((e.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(e.translation.norm(), 1e-9);
    EXPECT_LT((t.rotation.transpose() * t.rotation - Mat3::Identity()).norm(), 1e-9);
    EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-9);
  }
}

TEST(Pose, ReflectionRejected) {
  Mat4 m = Mat4::Identity();
  m(0, 0) = -1;
  EXPECT_THROW(PoseSE3::from_matrix(m), GeometryError);
}

TEST(Quaternion, ShortestArcMapsZToNormal) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const Vec3 n = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Mat3 r = quat_to_matrix(shortest_arc_from_z(n));
    EXPECT_LT((r * Vec3::UnitZ() - n).norm(), 1e-12);
  }
  EXPECT_LT((quat_to_matrix(shortest_arc_from_z(-Vec3::UnitZ())) * Vec3::UnitZ() + Vec3::UnitZ()).norm(), 1e-12);
}

TEST(Capture, RoundTripKeepsOrderAndTies) {
  const fs::path dir = scratch_dir("capture");
  Rng rng(1);
  std::vector<Frame> frames;
  const double stamps[] = {0.2, 0.1, 0.1, 0.0};
  for (int i = 0; i < 4; ++i) {
    RgbImage img(6, 4);
    for (double& v : img.data) v = rng.uniform();
    frames.push_back(make_frame(10 + i, stamps[i], img, small_k(), random_pose(rng)));
  }
  save_capture(dir, frames);
  const auto loaded = load_capture(dir);
  ASSERT_EQ(loaded.size(), 4u);
  EXPECT_EQ(loaded[0].id, 13);
  EXPECT_EQ(loaded[1].id, 11);  // tie at 0.1 keeps file order
  EXPECT_EQ(loaded[2].id, 12);
  EXPECT_EQ(loaded[3].id, 10);
  for (const Frame& f : loaded) {
    const Frame& src = frames[f.id - 10];
    for (std::size_t k = 0; k < f.image.data.size(); ++k)
      EXPECT_FLOAT_EQ(static_cast<float>(f.image.data[k]), static_cast<float>(src.image.data[k]));
    EXPECT_LT((f.coarse_pose.matrix() - src.coarse_pose.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
  const auto again = load_capture(dir);
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_EQ(again[i].id, loaded[i].id);
    EXPECT_EQ(again[i].image.data, loaded[i].image.data);
  }
}

TEST(Capture, ReflectedPoseNamesFrame) {
  const fs::path dir = scratch_dir("capture_bad");
  RgbImage img(6, 4, 0.5);
  Frame f = make_frame(7, 0.0, img, small_k(), PoseSE3::identity());
  save_capture(dir, {f});
  std::ifstream in(dir / "index.json");
  json j;
  in >> j;
  in.close();
  j["frames"][0]["pose"][0][0] = -1.0;
  std::ofstream(dir / "index.json") << j.dump();
  try {
    load_capture(dir);
    FAIL() << "expected CaptureError";
  } catch (const CaptureError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 7"), std::string::npos);
  }
}

TEST(Capture, MissingImageNamesPath) {
  const fs::path dir = scratch_dir("capture_missing");
  RgbImage img(6, 4, 0.5);
  save_capture(dir, {make_frame(0, 0.0, img, small_k(), PoseSE3::identity())});
  fs::remove(dir / "images" / "0000.pfm");
  try {
    load_capture(dir);
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("0000.pfm"), std::string::npos);
  }
}

TEST(Ply, SingleGaussianAtOrigin) {
  const fs::path dir = scratch_dir("ply1");
  GaussianModel m;
  m.resize(1);
  export_ply(m, dir / "one.ply");
  const GaussianModel back = import_ply(dir / "one.ply");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.params.quat(0), Vec4(1, 0, 0, 0));
  EXPECT_EQ(back.params.mean(0), Vec3::Zero());
}

TEST(Ply, RoundTripIsBitExact) {
  const fs::path dir = scratch_dir("ply2");
  Rng rng(11);
  GaussianModel m;
  m.resize(37);
  for (int g = 0; g < kParamGroups; ++g)
    for (double& v : m.params.group(static_cast<ParamGroup>(g))) v = rng.normal();
  export_ply(m, dir / "m.ply", PlyPrecision::Float64);
  EXPECT_EQ(import_ply(dir / "m.ply").params, m.params);

  // The default float32 layout is exact for float-representable values.
  for (int g = 0; g < kParamGroups; ++g)
    for (double& v : m.params.group(static_cast<ParamGroup>(g))) v = static_cast<float>(v);
  export_ply(m, dir / "f.ply");
  EXPECT_EQ(import_ply(dir / "f.ply").params, m.params);
}

TEST(Ply, EmptyModel) {
  const fs::path dir = scratch_dir("ply0");
  GaussianModel m;
  export_ply(m, dir / "e.ply");
  EXPECT_EQ(import_ply(dir / "e.ply").size(), 0u);
}

TEST(Ply, NonFiniteNamesIndex) {
  const fs::path dir = scratch_dir("plynan");
  GaussianModel m;
  m.resize(5);
  m.params.log_scale[3 * 3 + 1] = std::numeric_limits<double>::quiet_NaN();
  try {
    export_ply(m, dir / "bad.ply");
    FAIL();
  } catch (const PlyError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Ply, PointCloudRoundTrip) {
  const fs::path dir = scratch_dir("plycloud");
  std::vector<DensePoint> cloud(3);
  for (int i = 0; i < 3; ++i) {
    cloud[i].position = Vec3(i, 0.5 * i, -1.25);
    cloud[i].color = Vec3(0.1, 0.2, 0.3 * i);
    cloud[i].view_origin = Vec3(0, 0, -i);
    cloud[i].has_view = true;
  }
  export_point_cloud(cloud, dir / "c.ply");
  const auto back = import_point_cloud(dir / "c.ply");
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].position, cloud[i].position);
    EXPECT_EQ(back[i].color, cloud[i].color);
    EXPECT_EQ(back[i].view_origin, cloud[i].view_origin);
  }
}

TEST(Parallel, ResultIndependentOfWorkers) {
  std::vector<double> a(1000), b(1000);
  parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(double(i)); }, 1);
  parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(double(i)); }, 7);
  EXPECT_EQ(a, b);
}
