#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/core/capture.hpp"
#include "pocketgs/core/image_io.hpp"
#include "pocketgs/core/ply.hpp"
#include "pocketgs/eval/metrics.hpp"
#include "pocketgs/framegate.hpp"
#include "pocketgs/init/seed.hpp"
#include "pocketgs/mvs/mvs.hpp"
#include "pocketgs/sfm/bundle_adjustment.hpp"
#include "pocketgs/sfm/features.hpp"
#include "pocketgs/sfm/map_init.hpp"
#include "pocketgs/sfm/matching.hpp"
#include "pocketgs/train/trainer.hpp"

namespace pocketgs {

struct PipelineConfig {
  std::filesystem::path capture;  // read by run_pipeline(cfg)
  std::filesystem::path output;   // empty: nothing is written
  std::uint64_t seed = 0;
  // Training and evaluation resolution; 0 keeps the capture resolution.
  // Geometry always runs on the captured images.
  int width = 0;
  int height = 0;

  bool gate = true;
  bool ba = true;
  bool mvs = true;
  bool prior_init = true;

  GateConfig gate_cfg;
  FeatureConfig features;
  MatchConfig matching;
  double epipolar_px = 6.0;
  BAConfig ba_cfg;
  MvsConfig mvs_cfg;
  InitConfig init;
  TrainConfig train;
  int holdout_every = 8;  // keyframe i is held out when i % holdout_every == 0
  int save_every = 0;     // PLY snapshot period in iterations, 0 = off
  bool dump_depth = false;

  void validate() const {
    if (width < 0 || height < 0 || (width == 0) != (height == 0))
      throw std::invalid_argument("resolution must give both width and height");
    if (holdout_every < 0 || save_every < 0 || train.iterations < 0 || epipolar_px <= 0)
      throw std::invalid_argument("invalid PipelineConfig");
    gate_cfg.validate();
  }
};

struct StageLog {
  std::string name;
  bool ran = false;
  double seconds = 0;
  json detail = json::object();
};

struct ViewMetrics {
  int frame_id = -1;
  ImageMetrics initial;  // Theta_0
  ImageMetrics final;    // Theta*
};

struct RunReport {
  bool ok = true;
  std::string failed_stage;
  std::string error;
  // Seconds. t_geom covers every stage through initialization, t_train the
  // optimization; evaluation is charged to neither. t_total is their sum.
  double t_geom = 0;
  double t_train = 0;
  double t_total = 0;
  std::size_t peak_bytes = 0;
  std::size_t gaussians = 0;
  int width = 0;
  int height = 0;
  std::vector<int> keyframes;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  bool sparse_fallback = false;
  int iterations = 0;
  std::vector<ViewMetrics> views;
  std::vector<StageLog> stages;
  std::vector<std::string> warnings;

  double mean_psnr(bool final_model = true) const {
    if (views.empty()) return 0;
    double s = 0;
    for (const auto& v : views) s += final_model ? v.final.psnr : v.initial.psnr;
    return s / views.size();
  }
  double mean_ssim(bool final_model = true) const {
    if (views.empty()) return 0;
    double s = 0;
    for (const auto& v : views) s += final_model ? v.final.ssim : v.initial.ssim;
    return s / views.size();
  }
  const StageLog* stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
};

/// Report as JSON. Without `with_time` every wall-clock field is left out,
/// which makes reports of identical runs byte-identical.
inline json to_json(const RunReport& r, bool with_time = true) {
  json j;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["failed_stage"] = r.failed_stage;
    j["error"] = r.error;
  }
  if (with_time) j["time"] = {{"geom", r.t_geom}, {"train", r.t_train}, {"total", r.t_total}};
  j["peak_bytes_estimate"] = r.peak_bytes;
  j["gaussians"] = r.gaussians;
  j["iterations"] = r.iterations;
  j["resolution"] = {r.width, r.height};
  j["keyframes"] = r.keyframes;
  j["train_frames"] = r.train_ids;
  j["test_frames"] = r.test_ids;
  j["sparse_fallback"] = r.sparse_fallback;
  json views = json::array();
  for (const auto& v : r.views)
    views.push_back({{"frame_id", v.frame_id},
                     {"psnr_initial", v.initial.psnr},
                     {"ssim_initial", v.initial.ssim},
                     {"psnr", v.final.psnr},
                     {"ssim", v.final.ssim}});
  j["views"] = views;
  j["mean"] = {{"psnr_initial", r.mean_psnr(false)},
               {"ssim_initial", r.mean_ssim(false)},
               {"psnr", r.mean_psnr()},
               {"ssim", r.mean_ssim()}};
  json stages = json::array();
  for (const auto& s : r.stages) {
    json st = {{"name", s.name}, {"ran", s.ran}, {"detail", s.detail}};
    if (with_time) st["seconds"] = s.seconds;
    stages.push_back(st);
  }
  j["stages"] = stages;
  j["warnings"] = r.warnings;
  return j;
}

namespace detail {

inline RgbImage resample(const RgbImage& in, int w, int h) {
  if (in.width == w && in.height == h) return in;
  RgbImage out(w, h);
  const double sx = static_cast<double>(in.width) / w, sy = static_cast<double>(in.height) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, in.width - 1.0);
      const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, in.height - 1.0);
      const int x0 = static_cast<int>(u), y0 = static_cast<int>(v);
      const int x1 = std::min(x0 + 1, in.width - 1), y1 = std::min(y0 + 1, in.height - 1);
      const double a = u - x0, b = v - y0;
      for (int c = 0; c < 3; ++c)
        out(x, y, c) = (1 - b) * ((1 - a) * in(x0, y0, c) + a * in(x1, y0, c)) + b * ((1 - a) * in(x0, y1, c) + a * in(x1, y1, c));
    }
  return out;
}

inline Intrinsics rescale(const Intrinsics& k, int w, int h) {
  if (k.width == w && k.height == h) return k;
  const double sx = static_cast<double>(w) / k.width, sy = static_cast<double>(h) / k.height;
  return {k.fx * sx, k.fy * sy, (k.cx + 0.5) * sx - 0.5, (k.cy + 0.5) * sy - 0.5, w, h};
}

/// Cameras `cams` of `map`, keeping observations and points seen by at
/// least two of them.
inline SparseMap submap(const SparseMap& map, const std::vector<int>& cams) {
  SparseMap out;
  std::vector<int> remap(map.num_cameras(), -1);
  for (int c : cams) {
    remap[c] = out.num_cameras();
    out.poses.push_back(map.poses[c]);
    out.intrinsics.push_back(map.intrinsics[c]);
    out.frame_ids.push_back(map.frame_ids[c]);
  }
  out.points = map.points;
  for (auto o : map.observations)
    if (remap[o.camera] >= 0) {
      o.camera = remap[o.camera];
      out.observations.push_back(o);
    }
  out.compact();
  return out;
}

/// Sparse points as a cloud, colored from their first observation.
inline std::vector<DensePoint> sparse_cloud(const SparseMap& map, const std::vector<const RgbImage*>& images) {
  std::vector<DensePoint> cloud(map.num_points());
  std::vector<char> done(cloud.size(), 0);
  for (const auto& o : map.observations) {
    if (done[o.point]) continue;
    done[o.point] = 1;
    const RgbImage& img = *images[o.camera];
    const int x = std::clamp(static_cast<int>(std::lround(o.pixel.x())), 0, img.width - 1);
    const int y = std::clamp(static_cast<int>(std::lround(o.pixel.y())), 0, img.height - 1);
    DensePoint& p = cloud[o.point];
    p.position = map.points[o.point];
    p.color = Vec3(img(x, y, 0), img(x, y, 1), img(x, y, 2));
    p.view_origin = map.poses[o.camera].center();
    p.has_view = true;
  }
  return cloud;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline std::string frame_name(int id) {
  std::ostringstream s;
  s << "frame_" << std::setw(4) << std::setfill('0') << id;
  return s.str();
}

}  // namespace detail

/// Feature tracks across all views: pairwise mutual matches, epipolar
/// filtering under the coarse poses, then transitive joining.
inline std::vector<std::vector<TrackObservation>> build_feature_tracks(const std::vector<const Frame*>& frames,
                                                                      const PipelineConfig& cfg, json* log = nullptr) {
  const std::size_t n = frames.size();
  std::vector<FeatureSet> feats(n);
  parallel_for(n, [&](std::size_t i) { feats[i] = detect_and_describe(*frames[i], cfg.features); });
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (!feats[a].textureless && !feats[b].textureless) pairs.emplace_back(a, b);
  MatchGraph g;
  g.pairs.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [a, b] = pairs[p];
    const Frame& fa = *frames[a];
    const Frame& fb = *frames[b];
    g.pairs[p] = {a, b,
                  epipolar_filter(match(feats[a], feats[b], cfg.matching), feats[a], feats[b], fa.intrinsics,
                                  fb.intrinsics, fa.coarse_pose, fb.coarse_pose, cfg.epipolar_px)};
  });
  std::vector<int> counts(n);
  for (std::size_t i = 0; i < n; ++i) counts[i] = static_cast<int>(feats[i].keypoints.size());
  build_tracks(g, counts);
  std::vector<std::vector<TrackObservation>> tracks;
  for (const auto& t : g.tracks) {
    std::vector<TrackObservation> obs;
    for (const auto& e : t) {
      const Keypoint& kp = feats[e.view].keypoints[e.keypoint];
      obs.push_back({e.view, Vec2(kp.x, kp.y), -1});
    }
    tracks.push_back(std::move(obs));
  }
  if (log) {
    std::size_t matches = 0;
    int textureless = 0;
    for (const auto& p : g.pairs) matches += p.matches.size();
    for (const auto& f : feats) textureless += f.textureless;
    (*log)["keypoints"] = counts;
    (*log)["textureless_frames"] = textureless;
    (*log)["matches"] = matches;
    (*log)["tracks"] = tracks.size();
  }
  return tracks;
}

/// Byte-accounting model of the largest buffers alive in each stage.
inline std::size_t estimate_peak_bytes(std::size_t frames, int w, int h, int hypotheses, std::size_t cloud,
                                       std::size_t gaussians, int kmax) {
  const std::size_t px = static_cast<std::size_t>(w) * h;
  const std::size_t images = frames * px * 4 * sizeof(double);
  const std::size_t mvs = px * hypotheses * sizeof(std::int32_t) * 2 + frames * px * 2 * sizeof(std::uint64_t) +
                          frames * px * 2 * sizeof(double);
  const std::size_t init = cloud * (sizeof(DensePoint) + sizeof(SurfaceStats)) + gaussians * kParamsPerGaussian * 3 * sizeof(double);
  const std::size_t train = gaussians * kParamsPerGaussian * 4 * sizeof(double) + gaussians * 2 * sizeof(Splat2D) +
                            px * (static_cast<std::size_t>(kmax) * sizeof(CacheEntry) + sizeof(int) + 1) +
                            px * 3 * sizeof(double) * 3;
  return images + std::max({mvs, init, train});
}

/// capture -> keyframes -> sparse map -> BA -> dense cloud -> Theta_0 ->
/// Theta* -> held-out metrics. A stage that throws ends the run; the report
/// names it and whatever was already written stays on disk.
inline RunReport run_pipeline(std::vector<Frame> frames, const PipelineConfig& cfg) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  RunReport rep;
  const auto& out = cfg.output;
  if (!out.empty()) std::filesystem::create_directories(out);
  auto save_report = [&] {
    if (!out.empty()) detail::write_json(out / "report.json", to_json(rep));
  };

  std::vector<int> keys;
  std::vector<const Frame*> kf;
  SparseMap map;
  std::vector<int> train_cams, test_cams;
  std::vector<DensePoint> cloud;
  GaussianModel theta0, model;
  // Keyframe images and intrinsics at the rendering resolution.
  std::vector<RgbImage> target;
  std::vector<Intrinsics> target_k;
  // Which side of T_total a stage is charged to; evaluation is charged to
  // neither.
  enum class Clock { Geom, Train, None } clock_to = Clock::Geom;
  auto charge = [&](double sec) {
    if (clock_to == Clock::Geom) rep.t_geom += sec;
    if (clock_to == Clock::Train) rep.t_train += sec;
    rep.t_total = rep.t_geom + rep.t_train;
  };

  auto stage = [&](const std::string& name, bool enabled, const std::function<void(StageLog&)>& fn) {
    StageLog log;
    log.name = name;
    log.ran = enabled;
    if (!enabled) {
      rep.stages.push_back(log);
      return true;
    }
    const auto t0 = clock::now();
    try {
      fn(log);
    } catch (const std::exception& e) {
      log.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      charge(log.seconds);
      rep.ok = false;
      rep.failed_stage = name;
      rep.error = e.what();
      rep.stages.push_back(log);
      save_report();
      return false;
    }
    log.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    charge(log.seconds);
    rep.stages.push_back(log);
    return true;
  };

  const bool ok =
      stage("load", true,
            [&](StageLog& log) {
              if (frames.empty()) throw std::runtime_error("capture has no frames");
              rep.width = cfg.width ? cfg.width : frames[0].intrinsics.width;
              rep.height = cfg.width ? cfg.height : frames[0].intrinsics.height;
              log.detail = {{"frames", frames.size()}};
            }) &&
      stage("gate", true,
            [&](StageLog& log) {
              if (cfg.gate) {
                const KeyframeSet ks = select_keyframes(frames, cfg.gate_cfg);
                keys = ks.ids;
                log.detail = {{"accepted", ks.accepted},
                              {"rejected_blur", ks.rejected_blur},
                              {"rejected_displacement", ks.rejected_displacement}};
              } else {
                for (const Frame& f : frames) keys.push_back(f.id);
                log.detail = {{"accepted", keys.size()}, {"disabled", true}};
              }
              for (int id : keys)
                for (const Frame& f : frames)
                  if (f.id == id) {
                    kf.push_back(&f);
                    break;
                  }
              if (kf.size() < 2) throw std::runtime_error("fewer than two keyframes");
              rep.keyframes = keys;
              for (std::size_t i = 0; i < kf.size(); ++i) {
                const bool test = cfg.holdout_every > 0 && i % cfg.holdout_every == 0;
                (test ? test_cams : train_cams).push_back(static_cast<int>(i));
                (test ? rep.test_ids : rep.train_ids).push_back(keys[i]);
              }
            }) &&
      stage("sparse", true,
            [&](StageLog& log) {
              const auto tracks = build_feature_tracks(kf, cfg, &log.detail);
              std::vector<PoseSE3> poses;
              std::vector<Intrinsics> ks;
              for (const Frame* f : kf) poses.push_back(f->coarse_pose), ks.push_back(f->intrinsics);
              map = triangulate_tracks(poses, ks, keys, tracks, cfg.ba_cfg.min_tri_angle_deg);
              log.detail["points"] = map.num_points();
              if (map.num_points() == 0) throw std::runtime_error("no triangulated points");
            }) &&
      stage("ba", true,
            [&](StageLog& log) {
              log.ran = cfg.ba;
              if (cfg.ba) {
                BAResult r = run_global_ba(map, cfg.ba_cfg);
                map = std::move(r.map);
                log.detail = to_json(r.report);
                for (const auto& w : r.report.warnings) rep.warnings.push_back("ba: " + w);
              }
              log.detail["points"] = map.num_points();
              if (!out.empty()) {
                json poses = json::array();
                for (std::size_t c = 0; c < kf.size(); ++c)
                  poses.push_back({{"frame_id", keys[c]}, {"coarse", to_json(kf[c]->coarse_pose)}, {"refined", to_json(map.poses[c])}});
                detail::write_json(out / "poses.json", poses);
                save_sparse_map(map, out / "sparse_map.json");
              }
            }) &&
      stage("mvs", true,
            [&](StageLog& log) {
              const SparseMap sub = detail::submap(map, train_cams);
              std::vector<const GrayImage*> luma;
              std::vector<const RgbImage*> rgb;
              for (int c : train_cams) luma.push_back(&kf[c]->luma), rgb.push_back(&kf[c]->image);
              if (cfg.mvs) {
                const MvsResult r = run_mvs(sub, luma, rgb, cfg.mvs_cfg);
                log.detail = to_json(r);
                for (const auto& w : r.warnings) rep.warnings.push_back("mvs: " + w);
                cloud = r.cloud;
                if (!out.empty() && cfg.dump_depth) {
                  std::filesystem::create_directories(out / "depth");
                  for (const auto& dm : r.depth_maps)
                    detail::write_pfm(out / "depth" / (detail::frame_name(sub.frame_ids[dm.camera]) + ".pfm"), depth_image(dm));
                }
              } else {
                rep.warnings.push_back("mvs: disabled, initializing from sparse points");
              }
              if (cloud.empty()) {
                rep.sparse_fallback = true;
                cloud = detail::sparse_cloud(sub, rgb);
              }
              log.detail["sparse_fallback"] = rep.sparse_fallback;
              log.detail["cloud_points"] = cloud.size();
              if (!out.empty()) export_point_cloud(cloud, out / "dense.ply");
            }) &&
      stage("init", true, [&](StageLog& log) {
        InitConfig ic = cfg.init;
        ic.prior = cfg.prior_init;
        InitResult r = seed_gaussians(cloud, ic);
        log.detail = to_json(r.report);
        for (const auto& w : r.report.warnings) rep.warnings.push_back("init: " + w);
        if (r.model.size() == 0) throw std::runtime_error("no Gaussians seeded");
        theta0 = r.model;
        model = std::move(r.model);
        if (!out.empty()) export_ply(theta0, out / "theta0.ply");
      });

  if (ok) {
    clock_to = Clock::Train;
    rep.gaussians = model.size();
    const bool trained = stage("train", true, [&](StageLog& log) {
      for (const Frame* f : kf) {
        target.push_back(detail::resample(f->image, rep.width, rep.height));
        target_k.push_back(detail::rescale(f->intrinsics, rep.width, rep.height));
      }
      std::vector<TrainView> views;
      for (int c : train_cams) views.push_back({&target[c], map.poses[c], target_k[c]});
      std::function<void(int, const GaussianModel&)> snap;
      if (!out.empty() && cfg.save_every > 0) {
        std::filesystem::create_directories(out / "snapshots");
        snap = [&](int it, const GaussianModel& m) {
          if ((it + 1) % cfg.save_every == 0)
            export_ply(m, out / "snapshots" / ("iter_" + std::to_string(it + 1) + ".ply"));
        };
      }
      const TrainLog tl = train(model, views, cfg.train, snap);
      rep.iterations = tl.iterations;
      log.detail = to_json(tl, false);
      if (model.size() != rep.gaussians) throw std::logic_error("Gaussian count changed during training");
      if (!out.empty()) export_ply(model, out / "theta_star.ply");
    });
    clock_to = Clock::None;
    if (trained) stage("eval", true, [&](StageLog& log) {
      if (!out.empty()) {
        std::filesystem::create_directories(out / "renders");
        std::filesystem::create_directories(out / "gt");
      }
      for (int c : test_cams) {
        const Frame& f = *kf[c];
        ViewMetrics vm;
        vm.frame_id = f.id;
        const RgbImage r0 = render(theta0.params, map.poses[c], target_k[c], cfg.train.kmax, cfg.train.tile);
        const RgbImage r1 = render(model.params, map.poses[c], target_k[c], cfg.train.kmax, cfg.train.tile);
        vm.initial = evaluate_pair(r0, target[c]);
        vm.final = evaluate_pair(r1, target[c]);
        rep.views.push_back(vm);
        if (!out.empty()) {
          write_image(out / "renders" / (detail::frame_name(f.id) + ".pfm"), r1);
          write_image(out / "renders" / (detail::frame_name(f.id) + ".png"), r1);
          write_image(out / "gt" / (detail::frame_name(f.id) + ".pfm"), target[c]);
        }
      }
      log.detail = {{"views", rep.views.size()}};
      if (rep.views.empty()) rep.warnings.push_back("eval: no held-out views");
    });
  }
  rep.gaussians = model.size();
  rep.t_total = rep.t_geom + rep.t_train;
  rep.peak_bytes = estimate_peak_bytes(kf.size(), rep.width, rep.height, cfg.mvs ? cfg.mvs_cfg.hypotheses : 0,
                                       cloud.size(), model.size(), cfg.train.kmax);
  save_report();
  return rep;
}

inline RunReport run_pipeline(const PipelineConfig& cfg) { return run_pipeline(load_capture(cfg.capture), cfg); }

}  // namespace pocketgs
