// pocketgs command line: individual stages, the full pipeline, metrics and
// synthetic captures. Worker count comes from POCKETGS_THREADS (or --threads).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "pocketgs/pocketgs.hpp"

namespace fs = std::filesystem;
using namespace pocketgs;

namespace {

void add_gate_flags(CLI::App* app, PipelineConfig& cfg) {
  app->add_option("--tau-d", cfg.gate_cfg.tau_d, "displacement threshold (m)");
  app->add_option("--window-len", cfg.gate_cfg.window_len, "candidate window size (frames)");
  app->add_option("--window-time", cfg.gate_cfg.window_time, "candidate window span (s)");
  app->add_option("--gate-margin", cfg.gate_cfg.margin, "sharpness replacement margin");
}

void add_ba_flags(CLI::App* app, PipelineConfig& cfg) {
  app->add_option("--ba-rounds", cfg.ba_cfg.refinement_rounds, "refinement rounds");
  app->add_option("--huber-delta", cfg.ba_cfg.huber_delta, "Huber threshold (px)");
  app->add_option("--max-reproj", cfg.ba_cfg.max_reproj_px, "purification threshold (px)");
  app->add_option("--epipolar-px", cfg.epipolar_px, "match filter under coarse poses (px)");
}

void add_mvs_flags(CLI::App* app, PipelineConfig& cfg) {
  MvsConfig& m = cfg.mvs_cfg;
  app->add_option("--hypotheses", m.hypotheses, "depth hypotheses");
  app->add_option("--census-window", m.census_window, "census window (odd)");
  app->add_option("--sgm-p1", m.p1, "SGM small penalty");
  app->add_option("--sgm-p2", m.p2, "SGM large penalty");
  app->add_option("--conf-thresh", m.conf_thresh, "confidence threshold");
  app->add_option("--b-target", m.reference.b_target, "reference baseline target (m)");
  app->add_option("--sigma-b", m.reference.sigma_b, "reference baseline spread (m)");
  app->add_option("--alpha-min", m.reference.alpha_min_deg, "reference angle scale (deg)");
  app->add_option("--alpha-floor", m.reference.alpha_floor_deg, "reference angle floor (deg)");
  app->add_option("--voxel", m.fusion.voxel, "fusion voxel size (m), 0 keeps all points");
  app->add_flag("--dump-depth", cfg.dump_depth, "write per-frame depth maps as PFM");
}

void add_init_flags(CLI::App* app, PipelineConfig& cfg) {
  app->add_option("--knn-k", cfg.init.k, "neighbourhood size");
  app->add_option("--normal-scale-ratio", cfg.init.normal_ratio, "normal-axis / tangential scale");
  app->add_flag("--include-self", cfg.init.include_self, "put the point itself into its neighbourhood");
}

void add_train_flags(CLI::App* app, PipelineConfig& cfg) {
  TrainConfig& t = cfg.train;
  app->add_option("--iters", t.iterations, "training iterations");
  app->add_option("--kmax", t.kmax, "replay cache entries per pixel");
  app->add_option("--tile-size", t.tile, "raster tile size (px)");
  app->add_option("--lambda-ssim", t.lambda_ssim, "SSIM weight in the loss");
  app->add_option("--lr-position", t.adam.lr[0], "position learning rate");
  app->add_option("--lr-scale", t.adam.lr[1], "log-scale learning rate");
  app->add_option("--lr-rotation", t.adam.lr[2], "rotation learning rate");
  app->add_option("--lr-opacity", t.adam.lr[3], "opacity learning rate");
  app->add_option("--lr-color", t.adam.lr[4], "color learning rate");
  app->add_option("--save-every", cfg.save_every, "PLY snapshot period (iterations)");
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<Frame> select(const std::vector<Frame>& frames, const std::vector<int>& ids) {
  std::vector<Frame> out;
  for (int id : ids)
    for (const Frame& f : frames)
      if (f.id == id) out.push_back(f);
  return out;
}

std::vector<Frame> keyframes(const std::vector<Frame>& frames, const PipelineConfig& cfg) {
  if (!cfg.gate) return frames;
  return select(frames, select_keyframes(frames, cfg.gate_cfg).ids);
}

SparseMap sparse_from_capture(const std::vector<Frame>& kf, const PipelineConfig& cfg, json& log) {
  std::vector<const Frame*> ptrs;
  std::vector<PoseSE3> poses;
  std::vector<Intrinsics> ks;
  std::vector<int> ids;
  for (const Frame& f : kf) {
    ptrs.push_back(&f);
    poses.push_back(f.coarse_pose);
    ks.push_back(f.intrinsics);
    ids.push_back(f.id);
  }
  const auto tracks = build_feature_tracks(ptrs, cfg, &log);
  return triangulate_tracks(poses, ks, ids, tracks, cfg.ba_cfg.min_tri_angle_deg);
}

int cmd_gate(const fs::path& capture, const fs::path& out, const PipelineConfig& cfg) {
  const auto frames = load_capture(capture);
  const KeyframeSet ks = select_keyframes(frames, cfg.gate_cfg);
  const json j = {{"keyframes", ks.ids},
                  {"accepted", ks.accepted},
                  {"rejected_blur", ks.rejected_blur},
                  {"rejected_displacement", ks.rejected_displacement},
                  {"sharpness", ks.sharpness}};
  if (!out.empty()) write_json(out, j);
  std::cout << "accepted " << ks.accepted << ", rejected (blur) " << ks.rejected_blur << ", rejected (displacement) "
            << ks.rejected_displacement << "\n";
  return 0;
}

int cmd_ba(const fs::path& capture, const fs::path& out, const PipelineConfig& cfg) {
  const auto kf = keyframes(load_capture(capture), cfg);
  json log;
  SparseMap map = sparse_from_capture(kf, cfg, log);
  if (cfg.ba) {
    BAResult r = run_global_ba(map, cfg.ba_cfg);
    map = std::move(r.map);
    log["ba"] = to_json(r.report);
  }
  fs::create_directories(out);
  save_sparse_map(map, out / "sparse_map.json");
  write_json(out / "ba_report.json", log);
  std::cout << map.num_cameras() << " cameras, " << map.num_points() << " points\n";
  return 0;
}

int cmd_mvs(const fs::path& capture, const fs::path& map_path, const fs::path& out, const PipelineConfig& cfg) {
  const auto frames = load_capture(capture);
  const SparseMap map = load_sparse_map(map_path);
  const auto kf = select(frames, map.frame_ids);
  if (static_cast<int>(kf.size()) != map.num_cameras()) throw std::runtime_error("map frames missing from capture");
  std::vector<const GrayImage*> luma;
  std::vector<const RgbImage*> rgb;
  for (const Frame& f : kf) luma.push_back(&f.luma), rgb.push_back(&f.image);
  const MvsResult r = run_mvs(map, luma, rgb, cfg.mvs_cfg);
  fs::create_directories(out);
  export_point_cloud(r.cloud, out / "dense.ply");
  write_json(out / "mvs_report.json", to_json(r));
  if (cfg.dump_depth) {
    fs::create_directories(out / "depth");
    for (const auto& dm : r.depth_maps)
      detail::write_pfm(out / "depth" / (detail::frame_name(map.frame_ids[dm.camera]) + ".pfm"), depth_image(dm));
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << r.cloud.size() << " fused points\n";
  return 0;
}

int cmd_init(const fs::path& cloud_path, const fs::path& out, const PipelineConfig& cfg) {
  InitConfig ic = cfg.init;
  ic.prior = cfg.prior_init;
  const InitResult r = seed_gaussians(import_point_cloud(cloud_path), ic);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  export_ply(r.model, out);
  for (const auto& w : r.report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << r.report.seeds << " Gaussians (" << r.report.fallbacks << " isotropic fallbacks)\n";
  return 0;
}

int cmd_train(const fs::path& capture, const fs::path& map_path, const fs::path& model_path, const fs::path& out,
              const PipelineConfig& cfg) {
  const auto frames = load_capture(capture);
  const SparseMap map = load_sparse_map(map_path);
  const auto kf = select(frames, map.frame_ids);
  if (static_cast<int>(kf.size()) != map.num_cameras()) throw std::runtime_error("map frames missing from capture");
  std::vector<TrainView> views;
  for (int c = 0; c < map.num_cameras(); ++c)
    if (cfg.holdout_every == 0 || c % cfg.holdout_every != 0) views.push_back({&kf[c].image, map.poses[c], kf[c].intrinsics});
  GaussianModel model = import_ply(model_path);
  fs::create_directories(out);
  std::function<void(int, const GaussianModel&)> snap;
  if (cfg.save_every > 0) {
    fs::create_directories(out / "snapshots");
    snap = [&](int it, const GaussianModel& m) {
      if ((it + 1) % cfg.save_every == 0) export_ply(m, out / "snapshots" / ("iter_" + std::to_string(it + 1) + ".ply"));
    };
  }
  const TrainLog log = train(model, views, cfg.train, snap);
  export_ply(model, out / "theta_star.ply");
  json j = to_json(log);
  j["time"] = {{"geom", 0.0}, {"train", log.seconds}, {"total", log.seconds}};
  write_json(out / "train_log.json", j);
  std::cout << log.iterations << " iterations, final loss " << (log.loss.empty() ? 0.0 : log.loss.back()) << "\n";
  return 0;
}

int cmd_run(const PipelineConfig& cfg) {
  const RunReport r = run_pipeline(cfg);
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& s : r.stages) std::cout << std::setw(6) << s.name << (s.ran ? "  " : "  (skipped) ") << s.seconds << " s\n";
  std::cout << "T_geom " << r.t_geom << " s, T_train " << r.t_train << " s, T_total " << r.t_total << " s\n";
  std::cout << "Gaussians " << r.gaussians << ", held-out PSNR " << r.mean_psnr(false) << " -> " << r.mean_psnr()
            << " dB, SSIM " << r.mean_ssim() << "\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  if (!r.ok) {
    std::cerr << "stage '" << r.failed_stage << "' failed: " << r.error << "\n";
    return 1;
  }
  return 0;
}

int cmd_eval(const fs::path& rendered, const fs::path& gt, const fs::path& out) {
  std::map<std::string, fs::path> files;
  for (const auto& e : fs::directory_iterator(rendered)) {
    const std::string ext = detail::lower_ext(e.path());
    if (ext == ".pfm" || ext == ".png" || ext == ".ppm") files[e.path().filename().string()] = e.path();
  }
  json rows = json::array();
  double sp = 0, ss = 0;
  int n = 0, errors = 0;
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [name, path] : files) {
    if (!fs::exists(gt / name)) continue;
    const RgbImage a = read_image(path), b = read_image(gt / name);
    if (!a.same_size(b)) {
      std::cerr << name << ": size mismatch\n";
      rows.push_back({{"image", name}, {"error", "size mismatch"}});
      ++errors;
      continue;
    }
    const ImageMetrics m = evaluate_pair(a, b);
    rows.push_back({{"image", name}, {"psnr", m.psnr}, {"ssim", m.ssim}});
    std::cout << name << "  PSNR " << m.psnr << "  SSIM " << m.ssim << "\n";
    sp += m.psnr;
    ss += m.ssim;
    ++n;
  }
  const json mean = n ? json{{"psnr", sp / n}, {"ssim", ss / n}} : json(nullptr);
  if (n) std::cout << "mean  PSNR " << sp / n << "  SSIM " << ss / n << "  (" << n << " images)\n";
  if (!out.empty()) write_json(out, {{"images", rows}, {"mean", mean}});
  if (n == 0) std::cerr << "no matching image pairs\n";
  return n == 0 || errors ? 1 : 0;
}

struct SynthOptions {
  std::string scene = "room";
  int views = 10;
  int width = 160;
  int height = 120;
  double sigma_rot = 0.5;
  double sigma_t = 0.01;
  int gaussians = 60;
};

int cmd_synth(const fs::path& out, std::uint64_t seed, const SynthOptions& o) {
  std::vector<Frame> frames;
  if (o.scene == "room") {
    RoomSceneConfig rc;
    rc.n_views = o.views;
    rc.width = o.width;
    rc.height = o.height;
    rc.focal = 150.0 * o.width / 160.0;
    SyntheticScene s = gen_room_scene(seed, rc);
    perturb_coarse_poses(s, o.sigma_rot, o.sigma_t, seed + 1);
    frames = s.frames;
  } else if (o.scene == "plane") {
    PlaneSceneConfig pc;
    pc.n_views = o.views;
    pc.width = o.width;
    pc.height = o.height;
    pc.focal = 300.0 * o.width / 320.0;
    SyntheticScene s = gen_plane_scene(seed, pc);
    perturb_coarse_poses(s, o.sigma_rot, o.sigma_t, seed + 1);
    frames = s.frames;
  } else if (o.scene == "gaussian") {
    GaussianSceneConfig gc;
    gc.n_views = o.views;
    gc.width = o.width;
    gc.height = o.height;
    gc.focal = 60.0 * o.width / 64.0;
    const GaussianScene s = gen_gaussian_scene(o.gaussians, seed, gc);
    for (std::size_t i = 0; i < s.images.size(); ++i)
      frames.push_back(make_frame(static_cast<int>(i), 0.3 * i, s.images[i], s.intrinsics, s.poses[i]));
  } else {
    throw CLI::ValidationError("--scene", "expected room, plane or gaussian");
  }
  save_capture(out, frames);
  std::cout << "wrote " << frames.size() << " frames to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pocketgs: budgeted Gaussian splatting from posed captures"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (overrides POCKETGS_THREADS)");

  PipelineConfig cfg;
  fs::path capture, out, map_path, model_path, cloud_path, rendered, gt;
  bool skip_ba = false, skip_mvs = false, no_prior = false, no_gate = false;

  auto* gate = app.add_subcommand("gate", "select keyframes");
  gate->add_option("--capture", capture, "capture directory")->required();
  gate->add_option("--out", out, "JSON report path");
  add_gate_flags(gate, cfg);

  auto* ba = app.add_subcommand("ba", "features, triangulation and global bundle adjustment");
  ba->add_option("--capture", capture, "capture directory")->required();
  ba->add_option("--out", out, "output directory")->required();
  ba->add_flag("--skip-ba", skip_ba, "keep the coarse poses");
  ba->add_flag("--no-gate", no_gate, "use every frame");
  add_gate_flags(ba, cfg);
  add_ba_flags(ba, cfg);

  auto* mvs = app.add_subcommand("mvs", "single-reference plane-sweep stereo and fusion");
  mvs->add_option("--capture", capture, "capture directory")->required();
  mvs->add_option("--map", map_path, "sparse_map.json from `ba`")->required();
  mvs->add_option("--out", out, "output directory")->required();
  add_mvs_flags(mvs, cfg);

  auto* init = app.add_subcommand("init", "seed Gaussians from a point cloud");
  init->add_option("--cloud", cloud_path, "point cloud PLY")->required();
  init->add_option("--out", out, "output PLY")->required();
  init->add_flag("--no-prior-init", no_prior, "isotropic distance-based seeds");
  add_init_flags(init, cfg);

  auto* trn = app.add_subcommand("train", "optimize Gaussians against the map's frames");
  trn->add_option("--capture", capture, "capture directory")->required();
  trn->add_option("--map", map_path, "sparse_map.json with refined poses")->required();
  trn->add_option("--model", model_path, "initial Gaussian PLY")->required();
  trn->add_option("--out", out, "output directory")->required();
  trn->add_option("--holdout-every", cfg.holdout_every, "skip every n-th map frame (0 = train on all)");
  add_train_flags(trn, cfg);

  auto* run = app.add_subcommand("run", "full pipeline with held-out evaluation");
  run->add_option("--capture", cfg.capture, "capture directory")->required();
  run->add_option("--out", cfg.output, "output directory")->required();
  run->add_option("--seed", cfg.seed, "run seed (recorded in the report)");
  run->add_option("--width", cfg.width, "render/train width (default: capture)");
  run->add_option("--height", cfg.height, "render/train height (default: capture)");
  run->add_option("--holdout-every", cfg.holdout_every, "held-out keyframe period");
  run->add_flag("--no-gate", no_gate, "use every frame");
  run->add_flag("--skip-ba", skip_ba, "keep the coarse poses");
  run->add_flag("--skip-mvs", skip_mvs, "initialize from sparse points");
  run->add_flag("--no-prior-init", no_prior, "isotropic distance-based seeds");
  add_gate_flags(run, cfg);
  add_ba_flags(run, cfg);
  add_mvs_flags(run, cfg);
  add_init_flags(run, cfg);
  add_train_flags(run, cfg);

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM between matching image files");
  ev->add_option("--rendered", rendered, "rendered images")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", gt, "ground-truth images")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", out, "JSON output path");

  SynthOptions so;
  std::uint64_t seed = 3;
  auto* syn = app.add_subcommand("synth", "write a synthetic capture directory");
  syn->add_option("--out", out, "capture directory")->required();
  syn->add_option("--scene", so.scene, "room | plane | gaussian");
  syn->add_option("--seed", seed, "generator seed");
  syn->add_option("--views", so.views, "number of frames");
  syn->add_option("--width", so.width, "image width");
  syn->add_option("--height", so.height, "image height");
  syn->add_option("--perturb-rot", so.sigma_rot, "coarse pose rotation noise (deg)");
  syn->add_option("--perturb-t", so.sigma_t, "coarse pose center noise (m)");
  syn->add_option("--gaussians", so.gaussians, "Gaussian count for --scene gaussian");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) setenv("POCKETGS_THREADS", std::to_string(threads).c_str(), 1);
  cfg.gate = !no_gate;
  cfg.ba = !skip_ba;
  cfg.mvs = !skip_mvs;
  cfg.prior_init = !no_prior;

  try {
    if (*gate) return cmd_gate(capture, out, cfg);
    if (*ba) return cmd_ba(capture, out, cfg);
    if (*mvs) return cmd_mvs(capture, map_path, out, cfg);
    if (*init) return cmd_init(cloud_path, out, cfg);
    if (*trn) return cmd_train(capture, map_path, model_path, out, cfg);
    if (*run) return cmd_run(cfg);
    if (*ev) return cmd_eval(rendered, gt, out);
    if (*syn) return cmd_synth(out, seed, so);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
