// scanfeat: simulate, generate pairs, train, extract, register, slam, bench.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 pipeline
// error. All randomized stages take explicit seeds; reruns with identical
// inputs produce bit-identical artifacts.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include "scanfeat/bench/evaluate.hpp"
#include "scanfeat/config.hpp"
#include "scanfeat/core/rng.hpp"
#include "scanfeat/core/trajectory_io.hpp"
#include "scanfeat/featnet/train.hpp"
#include "scanfeat/pairgen/real_pairs.hpp"
#include "scanfeat/pairgen/synthetic.hpp"
#include "scanfeat/pipeline.hpp"
#include "scanfeat/sim/raycast.hpp"

namespace fs = std::filesystem;
using namespace scanfeat;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitPipeline = 4;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

PipelineConfig resolve_config(const GlobalArgs& args) {
  PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = load_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  std::cerr << "resolved config:\n" << config_to_json(cfg) << "\n";
  return cfg;
}

std::string scan_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scan_%04zu.scni", index);
  return buf;
}

std::vector<Pose> load_waypoints_json(const std::string& path, int* steps) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open waypoint file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("waypoint parse error in " + path + ": " + e.what());
  }
  if (j.contains("steps")) *steps = j.at("steps").get<int>();
  std::vector<Pose> out;
  for (const auto& wj : j.at("waypoints")) {
    Pose p;
    const auto& pos = wj.at("position");
    p.transform.translation = {pos[0].get<double>(), pos[1].get<double>(),
                               pos[2].get<double>()};
    if (wj.contains("yaw")) {
      p.transform.rotation = rotation_about_z(wj.at("yaw").get<double>());
    }
    out.push_back(p);
  }
  return out;
}

// feature source shared by extract / slam / bench
struct FeatureSource {
  std::string weights_path;
  bool handcrafted = false;
  std::string features_dir;  // precomputed feature files (bench only)

  void add_options(CLI::App* cmd, bool allow_dir) {
    cmd->add_option("--weights", weights_path,
                    "trained weights file (.w3dl)");
    cmd->add_flag("--handcrafted", handcrafted,
                  "use the classical corner/patch fallback");
    if (allow_dir) {
      cmd->add_option("--features-dir", features_dir,
                      "directory of precomputed .f3dl files, indexed like "
                      "the scan directory");
    }
  }

  void validate() const {
    const int sources = static_cast<int>(!weights_path.empty()) +
                        static_cast<int>(handcrafted) +
                        static_cast<int>(!features_dir.empty());
    if (sources != 1) {
      throw ConfigError(
          "exactly one of --weights, --handcrafted, --features-dir required");
    }
  }

  pipeline::FeatureExtractor extractor(const PipelineConfig& cfg) const {
    if (!weights_path.empty()) {
      return pipeline::FeatureExtractor::from_weights_file(
          weights_path, cfg.score_threshold, cfg.nms_radius);
    }
    return pipeline::FeatureExtractor::handcrafted(
        cfg.handcrafted, cfg.score_threshold, cfg.nms_radius);
  }
};

void save_pgm(const std::string& path, const featnet::Tensor& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (std::size_t i = 0; i < map.plane(); ++i) {
    const double v = std::clamp(map.data[i], 0.0, 1.0);
    out.put(static_cast<char>(std::lround(v * 255.0)));
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const GlobalArgs& global, const std::string& scene_path,
                 const std::string& waypoint_path, int steps_opt,
                 const std::string& preset, int beams, int cols,
                 double elev_min_deg, double elev_max_deg, double max_range,
                 double noise, double dropout, double falloff,
                 const std::string& out_dir) {
  const PipelineConfig cfg = resolve_config(global);
  const sim::Scene scene = sim::load_scene(scene_path);

  sim::ScannerSpec spec;
  if (!preset.empty()) {
    spec = sim::ScannerSpec::preset(preset);
  } else {
    spec.beams = beams;
    spec.azimuth_steps = cols;
    spec.elev_min = elev_min_deg * std::numbers::pi / 180.0;
    spec.elev_max = elev_max_deg * std::numbers::pi / 180.0;
  }
  spec.max_range = max_range;
  spec.range_noise_sigma = noise;
  spec.dropout_rate = dropout;
  spec.intensity_falloff = falloff;

  int steps = steps_opt;
  const std::vector<Pose> waypoints =
      load_waypoints_json(waypoint_path, &steps);
  if (steps < 2) throw ConfigError("trajectory needs at least 2 steps");

  fs::create_directories(out_dir);
  const auto samples =
      sim::generate_trajectory(scene, spec, waypoints, steps, cfg.seed);
  const SphericalModel model = spec.spherical_model();
  std::vector<Pose> poses;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ScanImage img = to_scan_image(samples[i].cloud);
    save_scan((fs::path(out_dir) / scan_name(i)).string(), img,
              &model.elevation_angles);
    poses.push_back(samples[i].pose);
  }
  save_trajectory((fs::path(out_dir) / "poses.txt").string(), poses);
  std::cerr << "wrote " << samples.size() << " scans to " << out_dir << "\n";
  return 0;
}

int cmd_pairgen(const GlobalArgs& global, const std::string& mode,
                const std::string& scans_dir, const std::string& poses_path,
                int per_scan, const std::string& out_dir) {
  const PipelineConfig cfg = resolve_config(global);
  const std::vector<std::string> files = pipeline::list_scan_files(scans_dir);
  if (files.empty()) throw IoError("no scans in " + scans_dir);
  fs::create_directories(out_dir);

  if (mode == "synthetic") {
    std::ofstream listing(fs::path(out_dir) / "synthetic_pairs.txt");
    if (!listing) throw IoError("cannot write pair listing");
    for (std::size_t i = 0; i < files.size(); ++i) {
      const ScanFile file = load_scan(files[i]);
      Rng rng(Rng::mix(cfg.seed, i));
      for (int k = 0; k < per_scan; ++k) {
        const pairgen::SyntheticTransformParams params =
            pairgen::sample_params(cfg.synth, rng);
        const pairgen::SyntheticPair pair =
            pairgen::synth_pair(file.image, params);
        char warp[64], flow[64];
        std::snprintf(warp, sizeof warp, "warp_%04zu_%02d.scni", i, k);
        std::snprintf(flow, sizeof flow, "flow_%04zu_%02d.scni", i, k);
        save_scan((fs::path(out_dir) / warp).string(), pair.image);
        save_flow((fs::path(out_dir) / flow).string(), pair.flow);
        listing << files[i] << ' ' << warp << ' ' << flow << '\n';
      }
    }
    std::cerr << "wrote " << files.size() * per_scan << " synthetic pairs\n";
    return 0;
  }
  if (mode != "real") throw ConfigError("mode must be synthetic or real");

  const std::vector<Pose> poses = load_trajectory(poses_path);
  if (poses.size() != files.size()) {
    throw ConfigError("pose count disagrees with scan count");
  }
  // lazy cloud cache;  pairs reuse anchors heavily
  std::vector<std::unique_ptr<pipeline::LoadedScan>> cache(files.size());
  const auto scan_at = [&](std::size_t i) -> const pipeline::LoadedScan& {
    if (!cache[i]) {
      cache[i] = std::make_unique<pipeline::LoadedScan>(
          pipeline::load_scan_with_cloud(files[i]));
    }
    return *cache[i];
  };
  const pairgen::CloudAccessor clouds =
      [&](std::size_t i) -> const OrderedPointCloud& {
    return scan_at(i).cloud;
  };
  pairgen::PairSelectionConfig sel;
  sel.inner_radius = cfg.shell_inner;
  sel.outer_radius = cfg.shell_outer;
  sel.overlap_threshold = cfg.overlap_threshold;
  sel.correspondence_distance = cfg.correspondence_distance;
  sel.occlusion_margin = cfg.occlusion_margin;
  pairgen::PairSelectionStats stats;
  const std::vector<pairgen::PairRecord> pairs = pairgen::select_real_pairs(
      poses, clouds, sel, cfg.anchor_stride, cfg.seed, &stats);
  pairgen::save_pair_manifest((fs::path(out_dir) / "pairs.txt").string(),
                              pairs);
  for (const pairgen::PairRecord& rec : pairs) {
    const pipeline::LoadedScan& a = scan_at(rec.anchor);
    const pipeline::LoadedScan& b = scan_at(rec.partner);
    const FlowMap flow = pairgen::pixel_flow(a.cloud, b.image, rec.transform,
                                             b.model, cfg.occlusion_margin);
    char name[64];
    std::snprintf(name, sizeof name, "flow_%04zu_%04zu.scni", rec.anchor,
                  rec.partner);
    save_flow((fs::path(out_dir) / name).string(), flow);
  }
  std::cerr << "accepted " << pairs.size() << " pairs ("
            << stats.anchors_skipped << " of " << stats.anchors_tried
            << " anchors skipped)\n";
  return 0;
}

featnet::TrainSample make_sample(const ScanImage& a, const ScanImage& b,
                                 const FlowMap& flow) {
  featnet::TrainSample s;
  s.image_a = a;
  s.image_b = b;
  s.flow = flow;
  return s;
}

int cmd_train(const GlobalArgs& global, const std::string& synth_dir,
              const std::string& real_dir, const std::string& scans_dir,
              const std::string& out_path, const std::string& curve_path) {
  const PipelineConfig cfg = resolve_config(global);
  Rng crop_rng(Rng::mix(cfg.seed, 0xc209));

  std::vector<ScanImage> dataset_images;
  struct RawPair {
    ScanImage a, b;
    FlowMap flow;
  };
  std::vector<RawPair> synth_raw, real_raw;

  if (!synth_dir.empty()) {
    std::ifstream listing(fs::path(synth_dir) / "synthetic_pairs.txt");
    if (!listing) {
      throw IoError("missing synthetic_pairs.txt in " + synth_dir);
    }
    std::string src, warp, flow;
    while (listing >> src >> warp >> flow) {
      RawPair pair;
      pair.a = load_scan(src).image;
      pair.b = load_scan((fs::path(synth_dir) / warp).string()).image;
      pair.flow = load_flow((fs::path(synth_dir) / flow).string());
      dataset_images.push_back(pair.a);
      synth_raw.push_back(std::move(pair));
    }
  }
  if (!real_dir.empty()) {
    if (scans_dir.empty()) {
      throw ConfigError("--real needs --scans for the underlying scan files");
    }
    const std::vector<std::string> files =
        pipeline::list_scan_files(scans_dir);
    const auto pairs = pairgen::load_pair_manifest(
        (fs::path(real_dir) / "pairs.txt").string());
    for (const pairgen::PairRecord& rec : pairs) {
      if (rec.anchor >= files.size() || rec.partner >= files.size()) {
        throw IoError("pair manifest indexes outside the scan directory");
      }
      RawPair pair;
      pair.a = load_scan(files[rec.anchor]).image;
      pair.b = load_scan(files[rec.partner]).image;
      char name[64];
      std::snprintf(name, sizeof name, "flow_%04zu_%04zu.scni", rec.anchor,
                    rec.partner);
      pair.flow = load_flow((fs::path(real_dir) / name).string());
      dataset_images.push_back(pair.a);
      dataset_images.push_back(pair.b);
      real_raw.push_back(std::move(pair));
    }
  }
  if (synth_raw.empty() && real_raw.empty()) {
    throw ConfigError("no training pairs given (--synthetic and/or --real)");
  }

  const featnet::ChannelStats stats = featnet::compute_stats(dataset_images);
  const auto build = [&](const std::vector<RawPair>& raw) {
    std::vector<featnet::TrainSample> out;
    for (const RawPair& pair : raw) {
      const featnet::TrainSample normalized =
          make_sample(featnet::normalize(pair.a, stats),
                      featnet::normalize(pair.b, stats), pair.flow);
      const auto cropped =
          featnet::crop_sample(normalized.image_a, normalized.image_b,
                               normalized.flow, cfg.crop, crop_rng);
      if (cropped) out.push_back(*cropped);
    }
    return out;
  };
  const std::vector<featnet::TrainSample> synth = build(synth_raw);
  const std::vector<featnet::TrainSample> real = build(real_raw);
  if (synth.empty() && real.empty()) {
    throw Error("no crop with enough flow support; check the pair inputs");
  }
  std::cerr << "training on " << synth.size() << " synthetic and "
            << real.size() << " real samples\n";

  const featnet::NetworkWeights init =
      featnet::init_weights(cfg.network, Rng::mix(cfg.seed, 0x1217));
  const featnet::TrainResult result =
      train(cfg.network, init, synth, real, cfg.schedule, cfg.training,
            cfg.seed);
  if (result.diverged) {
    std::cerr << "training diverged after " << result.steps << " steps\n";
    featnet::save_loss_curve(curve_path, result.curve);
    throw Error("training diverged (loss exceeded 10x its initial value)");
  }
  featnet::save_weights(out_path, cfg.network, result.weights, stats);
  if (!curve_path.empty()) {
    featnet::save_loss_curve(curve_path, result.curve);
  }
  std::cerr << "trained " << result.steps << " steps; final loss "
            << (result.curve.empty() ? 0.0 : result.curve.back().total)
            << "\n";
  return 0;
}

int cmd_extract(const GlobalArgs& global, const std::string& scan_path,
                const std::string& out_path, const FeatureSource& source,
                const std::string& score_map_path) {
  const PipelineConfig cfg = resolve_config(global);
  source.validate();
  const pipeline::LoadedScan scan =
      pipeline::load_scan_with_cloud(scan_path);
  const pipeline::FeatureExtractor extractor = source.extractor(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const featnet::DenseFeatureMap maps = extractor.maps(scan.image);
  const extract::FeatureSet features =
      extract::extract(maps, scan.cloud, cfg.score_threshold, cfg.nms_radius);
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  extract::save_features(out_path, features);
  if (!score_map_path.empty()) {
    save_pgm(score_map_path, extract::fuse_scores(maps));
  }
  std::cerr << features.size() << " keypoints in " << ms << " ms\n";
  return 0;
}

int cmd_register(const GlobalArgs& global, const std::string& a_path,
                 const std::string& b_path, bool with_icp,
                 const std::string& scan_a, const std::string& scan_b,
                 const std::string& report_path) {
  const PipelineConfig cfg = resolve_config(global);
  const extract::FeatureSet fa = extract::load_features(a_path);
  const extract::FeatureSet fb = extract::load_features(b_path);

  const auto t0 = std::chrono::steady_clock::now();
  const reg::MatchSet matches = reg::match(fa, fb);
  reg::RegistrationResult result =
      reg::estimate_rigid(matches, fa, fb, cfg.ransac_inlier_dist,
                          cfg.ransac_iterations, cfg.seed);
  const double ransac_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
  std::vector<double> icp_residuals;
  if (with_icp) {
    if (scan_a.empty() || scan_b.empty()) {
      throw ConfigError("--icp needs --scan-a and --scan-b");
    }
    if (!result.converged) throw Error("registration did not converge");
    const pipeline::LoadedScan la = pipeline::load_scan_with_cloud(scan_a);
    const pipeline::LoadedScan lb = pipeline::load_scan_with_cloud(scan_b);
    const reg::IcpResult icp =
        reg::refine_icp(result.transform, la.cloud, lb.cloud, cfg.icp);
    result.transform = icp.transform;
    icp_residuals = icp.residuals;
  }

  // 3x4 row-major transform on stdout
  std::cout.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) std::cout << result.transform.rotation(r, c) << ' ';
    std::cout << result.transform.translation[r] << '\n';
  }

  if (!report_path.empty()) {
    nlohmann::json j;
    j["matches"] = matches.pairs.size();
    j["inliers"] = result.inlier_count;
    j["converged"] = result.converged;
    j["icp_residuals"] = icp_residuals;
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write report: " + report_path);
    out << j.dump(2) << '\n';
  }
  std::cerr << "matches " << matches.pairs.size() << ", inliers "
            << result.inlier_count << ", ransac " << ransac_ms << " ms\n";
  return result.converged ? 0 : kExitPipeline;
}

int cmd_slam(const GlobalArgs& global, const std::string& scans_dir,
             const std::string& out_path, bool loop_closure, bool with_icp,
             const FeatureSource& source, const std::string& graph_path,
             const std::string& topview_path) {
  const PipelineConfig cfg = resolve_config(global);
  source.validate();
  const std::vector<std::string> files = pipeline::list_scan_files(scans_dir);
  if (files.size() < 2) throw IoError("need at least 2 scans in " + scans_dir);
  std::vector<pipeline::LoadedScan> scans;
  scans.reserve(files.size());
  for (const std::string& file : files) {
    scans.push_back(pipeline::load_scan_with_cloud(file));
  }

  pipeline::SlamOptions options;
  options.loop_closure = loop_closure;
  options.refine_with_icp = with_icp;
  options.ransac_inlier_dist = cfg.ransac_inlier_dist;
  options.ransac_iterations = cfg.ransac_iterations;
  options.seed = cfg.seed;
  options.vocab_k = cfg.vocab_k;
  options.hist_threshold = cfg.hist_threshold;
  options.min_loop_gap = cfg.min_loop_gap;
  options.min_loop_inliers = cfg.min_loop_inliers;
  options.icp = cfg.icp;
  options.lm = cfg.lm;

  const pipeline::SlamResult result =
      pipeline::run_slam(scans, source.extractor(cfg), options);
  save_trajectory(out_path, result.trajectory);
  if (!graph_path.empty()) mapping::save_graph(graph_path, result.graph);
  if (!topview_path.empty()) {
    std::ofstream out(topview_path);
    if (!out) throw IoError("cannot write topview: " + topview_path);
    out.precision(12);
    out << "index,x,y\n";
    for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
      out << i << ',' << result.trajectory[i].transform.translation.x() << ','
          << result.trajectory[i].transform.translation.y() << '\n';
    }
  }
  std::cerr << "trajectory of " << result.trajectory.size() << " poses; "
            << result.accepted_loops << "/" << result.proposed_loops
            << " loop proposals accepted\n";
  return 0;
}

int cmd_bench(const GlobalArgs& global, const std::string& manifest_path,
              const std::string& scans_dir, const FeatureSource& source,
              const std::string& report_path, const std::string& csv_path,
              const std::string& timing_path, const std::string& sweep_path) {
  const PipelineConfig cfg = resolve_config(global);
  source.validate();
  const auto manifest = pairgen::load_pair_manifest(manifest_path);
  const std::vector<std::string> files = pipeline::list_scan_files(scans_dir);

  // cache features per scan index
  std::vector<std::optional<extract::FeatureSet>> cache(files.size());
  std::optional<pipeline::FeatureExtractor> extractor;
  if (source.features_dir.empty()) extractor = source.extractor(cfg);
  const bench::FeatureProvider provider =
      [&](std::size_t index) -> extract::FeatureSet {
    if (index >= files.size()) {
      throw IoError("pair index outside the scan directory");
    }
    if (!cache[index]) {
      if (extractor) {
        cache[index] =
            extractor->run(pipeline::load_scan_with_cloud(files[index]));
      } else {
        char name[64];
        std::snprintf(name, sizeof name, "features_%04zu.f3dl", index);
        cache[index] = extract::load_features(
            (fs::path(source.features_dir) / name).string());
      }
    }
    return *cache[index];
  };

  bench::BenchThresholds thresholds{cfg.tau1, cfg.tau2, cfg.tau3};
  bench::RansacParams ransac{cfg.ransac_inlier_dist, cfg.ransac_iterations,
                             cfg.seed};
  const bench::BenchmarkReport report =
      bench::evaluate_pairs(manifest, provider, thresholds, ransac);
  if (!report_path.empty()) {
    bench::save_report_json(report_path, report, thresholds);
  }
  if (!csv_path.empty()) bench::save_report_csv(csv_path, report);
  if (!timing_path.empty()) {
    std::ofstream out(timing_path);
    if (!out) throw IoError("cannot write timing: " + timing_path);
    out << "stage,mean_ms\nextract," << report.timing.extract_ms << "\nmatch,"
        << report.timing.match_ms << "\nransac," << report.timing.ransac_ms
        << '\n';
  }
  if (!sweep_path.empty()) {
    // per-column sweep: each aggregate against its own threshold
    std::ofstream out(sweep_path);
    if (!out) throw IoError("cannot write sweep: " + sweep_path);
    out.precision(12);
    out << "tau,rs,mr,rr\n";
    for (int k = 1; k <= 10; ++k) {
      const double tau = 0.1 * k;
      double rs = 0.0;
      std::size_t mr = 0, rr = 0;
      for (const pairgen::PairRecord& rec : manifest) {
        const extract::FeatureSet fa = provider(rec.anchor);
        const extract::FeatureSet fb = provider(rec.partner);
        rs += bench::repeatability(fa, fb, rec.transform, tau);
      }
      for (const bench::PairEvaluation& row : report.pairs) {
        if (row.ok && row.inlier_ratio > tau) ++mr;
        if (row.ok && row.translation_error < tau) ++rr;
      }
      const double n = static_cast<double>(manifest.size());
      out << tau << ',' << 100.0 * rs / n << ',' << 100.0 * mr / n << ','
          << 100.0 * rr / n << '\n';
    }
  }
  std::cerr << "RS " << report.rs << "%  MR " << report.mr << "%  RR "
            << report.rr << "%\n";
  std::cerr << "timing per stage (ms): extract " << report.timing.extract_ms
            << ", match " << report.timing.match_ms << ", ransac "
            << report.timing.ransac_ms
            << "  [reference GPU pipeline, 64x1024: extract 22.9, ransac 9.5]"
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR scan-image features: simulation, training, "
               "registration, mapping and benchmarks"};
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--config", global.config_path, "pipeline config JSON");
  app.add_option("--seed", global.seed, "seed override")
      ->each([&](const std::string&) { global.seed_set = true; });

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "raycast a scene along a "
                                                 "trajectory into scan files");
  std::string scene_path, waypoint_path, out_dir, preset;
  int steps = 0, beams = 64, cols = 1024;
  double elev_min_deg = -16.6, elev_max_deg = 16.6, max_range = 120.0;
  double noise = 0.0, dropout = 0.0, falloff = 0.0;
  sim_cmd->add_option("--scene", scene_path, "scene JSON")->required();
  sim_cmd->add_option("--waypoints", waypoint_path, "trajectory JSON")
      ->required();
  sim_cmd->add_option("--steps", steps, "pose count override");
  sim_cmd->add_option("--preset", preset, "scanner preset: os1-64, os0-128");
  sim_cmd->add_option("--beams", beams, "beam count");
  sim_cmd->add_option("--cols", cols, "azimuth steps");
  sim_cmd->add_option("--elev-min-deg", elev_min_deg, "lowest beam, degrees");
  sim_cmd->add_option("--elev-max-deg", elev_max_deg, "highest beam, degrees");
  sim_cmd->add_option("--max-range", max_range, "meters");
  sim_cmd->add_option("--noise", noise, "range noise sigma, meters");
  sim_cmd->add_option("--dropout", dropout, "dropout fraction");
  sim_cmd->add_option("--falloff", falloff, "intensity falloff exponent");
  sim_cmd->add_option("--out", out_dir, "output directory")->required();

  // pairgen
  auto* pair_cmd = app.add_subcommand("pairgen",
                                      "generate training/evaluation pairs");
  std::string pair_mode, pair_scans, pair_poses, pair_out;
  int per_scan = 2;
  pair_cmd->add_option("--mode", pair_mode, "synthetic or real")->required();
  pair_cmd->add_option("--scans", pair_scans, "scan directory")->required();
  pair_cmd->add_option("--poses", pair_poses, "pose file (real mode)");
  pair_cmd->add_option("--per-scan", per_scan,
                       "synthetic pairs per source scan");
  pair_cmd->add_option("--out", pair_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the detector/"
                                                "descriptor network");
  std::string train_synth, train_real, train_scans, train_out, train_curve;
  train_cmd->add_option("--synthetic", train_synth,
                        "synthetic pair directory");
  train_cmd->add_option("--real", train_real, "real pair directory");
  train_cmd->add_option("--scans", train_scans,
                        "scan directory behind the real manifest");
  train_cmd->add_option("--out", train_out, "weights output")->required();
  train_cmd->add_option("--curve", train_curve, "loss curve CSV");

  // extract
  auto* extract_cmd =
      app.add_subcommand("extract", "extract 3D keypoints and descriptors");
  std::string extract_scan, extract_out, score_map;
  FeatureSource extract_source;
  extract_cmd->add_option("--scan", extract_scan, "scan file")->required();
  extract_cmd->add_option("--out", extract_out, "feature file")->required();
  extract_source.add_options(extract_cmd, false);
  extract_cmd->add_option("--emit-score-map", score_map,
                          "write the fused score map as PGM");

  // register
  auto* register_cmd =
      app.add_subcommand("register", "align two feature sets");
  std::string reg_a, reg_b, reg_scan_a, reg_scan_b, reg_report;
  bool reg_icp = false;
  register_cmd->add_option("--features-a", reg_a, "feature file A")
      ->required();
  register_cmd->add_option("--features-b", reg_b, "feature file B")
      ->required();
  register_cmd->add_flag("--icp", reg_icp, "refine with point-to-point icp");
  register_cmd->add_option("--scan-a", reg_scan_a, "scan file A (for icp)");
  register_cmd->add_option("--scan-b", reg_scan_b, "scan file B (for icp)");
  register_cmd->add_option("--report", reg_report, "JSON report path");

  // slam
  auto* slam_cmd = app.add_subcommand("slam", "scan-to-scan odometry with "
                                              "optional loop closure");
  std::string slam_scans, slam_out, slam_graph, slam_topview;
  bool slam_loops = false, slam_icp = false;
  FeatureSource slam_source;
  slam_cmd->add_option("--scans", slam_scans, "scan directory")->required();
  slam_cmd->add_option("--out", slam_out, "trajectory output")->required();
  slam_cmd->add_flag("--loop-closure", slam_loops, "propose and use loops");
  slam_cmd->add_flag("--icp", slam_icp, "icp-refine every registration");
  slam_source.add_options(slam_cmd, false);
  slam_cmd->add_option("--graph", slam_graph, "write the pose graph");
  slam_cmd->add_option("--emit-plots", slam_topview,
                       "write a top-view CSV of the trajectory");

  // bench
  auto* bench_cmd =
      app.add_subcommand("bench", "benchmark metrics over a pair manifest");
  std::string bench_manifest, bench_scans, bench_report, bench_csv,
      bench_timing, bench_sweep;
  FeatureSource bench_source;
  bench_cmd->add_option("--manifest", bench_manifest, "pair manifest")
      ->required();
  bench_cmd->add_option("--scans", bench_scans, "scan directory")->required();
  bench_source.add_options(bench_cmd, true);
  bench_cmd->add_option("--report", bench_report, "JSON report path");
  bench_cmd->add_option("--csv", bench_csv, "per-pair CSV path");
  bench_cmd->add_option("--timing", bench_timing,
                        "wall-clock timing CSV (volatile)");
  bench_cmd->add_option("--emit-plots", bench_sweep,
                        "threshold sweep CSV for plotting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (sim_cmd->parsed()) {
      return cmd_simulate(global, scene_path, waypoint_path, steps, preset,
                          beams, cols, elev_min_deg, elev_max_deg, max_range,
                          noise, dropout, falloff, out_dir);
    }
    if (pair_cmd->parsed()) {
      return cmd_pairgen(global, pair_mode, pair_scans, pair_poses, per_scan,
                         pair_out);
    }
    if (train_cmd->parsed()) {
      return cmd_train(global, train_synth, train_real, train_scans,
                       train_out, train_curve);
    }
    if (extract_cmd->parsed()) {
      return cmd_extract(global, extract_scan, extract_out, extract_source,
                         score_map);
    }
    if (register_cmd->parsed()) {
      return cmd_register(global, reg_a, reg_b, reg_icp, reg_scan_a,
                          reg_scan_b, reg_report);
    }
    if (slam_cmd->parsed()) {
      return cmd_slam(global, slam_scans, slam_out, slam_loops, slam_icp,
                      slam_source, slam_graph, slam_topview);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(global, bench_manifest, bench_scans, bench_source,
                       bench_report, bench_csv, bench_timing, bench_sweep);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: pipeline: " << e.what() << "\n";
    return kExitPipeline;
  }
  return kExitConfig;
}
