#include "scanfeat/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <numbers>

#include "scanfeat/core/rng.hpp"
#include "scanfeat/featnet/preprocess.hpp"
#include "scanfeat/mapping/vocabulary.hpp"
#include "scanfeat/registration/registration.hpp"

namespace scanfeat::pipeline {

LoadedScan load_scan_with_cloud(const std::string& path) {
  const ScanFile file = load_scan(path);
  if (!file.elevation_angles) {
    throw IoError("scan file lacks the elevation table needed for 3D: " +
                  path);
  }
  LoadedScan out;
  out.image = file.image;
  out.model.azimuth_resolution =
      2.0 * std::numbers::pi / file.image.width;
  out.model.azimuth_offset = 0.0;
  out.model.elevation_angles = *file.elevation_angles;
  out.cloud = cloud_from_scan_image(out.image, out.model);
  return out;
}

LoadedScan from_cloud(const OrderedPointCloud& cloud,
                      const SphericalModel& model) {
  LoadedScan out;
  out.image = to_scan_image(cloud);
  out.model = model;
  out.cloud = cloud;
  return out;
}

std::vector<std::string> list_scan_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory: " + dir);
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".scni") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

FeatureExtractor FeatureExtractor::handcrafted(
    const extract::HandcraftedConfig& cfg, double score_threshold,
    int nms_radius) {
  FeatureExtractor e;
  e.handcrafted_cfg_ = cfg;
  e.score_threshold_ = score_threshold;
  e.nms_radius_ = nms_radius;
  return e;
}

FeatureExtractor FeatureExtractor::from_weights(featnet::WeightsFile weights,
                                                double score_threshold,
                                                int nms_radius) {
  FeatureExtractor e;
  e.weights_ = std::move(weights);
  e.score_threshold_ = score_threshold;
  e.nms_radius_ = nms_radius;
  return e;
}

FeatureExtractor FeatureExtractor::from_weights_file(const std::string& path,
                                                     double score_threshold,
                                                     int nms_radius) {
  return from_weights(featnet::load_weights(path), score_threshold,
                      nms_radius);
}

featnet::DenseFeatureMap FeatureExtractor::maps(const ScanImage& image) const {
  if (weights_) {
    const ScanImage normalized = featnet::normalize(image, weights_->stats);
    return featnet::forward(normalized, weights_->config, weights_->weights);
  }
  return extract::handcrafted_maps(image, handcrafted_cfg_);
}

extract::FeatureSet FeatureExtractor::run(const LoadedScan& scan) const {
  return extract::extract(maps(scan.image), scan.cloud, score_threshold_,
                          nms_radius_);
}

SlamResult run_slam(const std::vector<LoadedScan>& scans,
                    const FeatureExtractor& extractor,
                    const SlamOptions& options) {
  if (scans.size() < 2) throw Error("slam needs at least two scans");
  SlamResult out;

  std::vector<extract::FeatureSet> features;
  features.reserve(scans.size());
  for (const LoadedScan& scan : scans) {
    features.push_back(extractor.run(scan));
  }

  // consecutive registrations: scan i+1 expressed in scan i's frame
  std::vector<reg::RegistrationResult> odometry;
  for (std::size_t i = 0; i + 1 < scans.size(); ++i) {
    const reg::MatchSet matches = reg::match(features[i + 1], features[i]);
    reg::RegistrationResult est = reg::estimate_rigid(
        matches, features[i + 1], features[i], options.ransac_inlier_dist,
        options.ransac_iterations, Rng::mix(options.seed, i));
    if (options.refine_with_icp && est.converged) {
      const reg::IcpResult refined =
          reg::refine_icp(est.transform, scans[i + 1].cloud, scans[i].cloud,
                          options.icp);
      est.transform = refined.transform;
    }
    odometry.push_back(std::move(est));
  }

  std::vector<mapping::LoopConstraint> loops;
  if (options.loop_closure) {
    std::vector<Eigen::VectorXd> pooled;
    for (const extract::FeatureSet& set : features) {
      pooled.insert(pooled.end(), set.descriptors.begin(),
                    set.descriptors.end());
    }
    std::size_t k = options.vocab_k;
    if (pooled.size() < 2 * k) {
      k = std::max<std::size_t>(2, pooled.size() / 4);
    }
    const mapping::Vocabulary vocab =
        mapping::build_vocabulary(pooled, k, Rng::mix(options.seed, 0xb07));
    std::vector<mapping::BowHistogram> histograms;
    histograms.reserve(features.size());
    for (const extract::FeatureSet& set : features) {
      histograms.push_back(mapping::histogram(set, vocab));
    }
    const auto proposals = mapping::propose_loops(
        histograms, options.hist_threshold, options.min_loop_gap);
    out.proposed_loops = proposals.size();
    for (const auto& [i, j] : proposals) {
      // geometric verification before the edge is trusted
      try {
        const reg::MatchSet matches = reg::match(features[j], features[i]);
        reg::RegistrationResult est = reg::estimate_rigid(
            matches, features[j], features[i], options.ransac_inlier_dist,
            options.ransac_iterations,
            Rng::mix(options.seed, 0x10000 + i * 4096 + j));
        if (!est.converged || est.inlier_count < options.min_loop_inliers) {
          continue;
        }
        if (options.refine_with_icp) {
          const reg::IcpResult refined = reg::refine_icp(
              est.transform, scans[j].cloud, scans[i].cloud, options.icp);
          est.transform = refined.transform;
        }
        loops.push_back({i, j, std::move(est)});
        ++out.accepted_loops;
      } catch (const Error&) {
        continue;  // unverifiable proposal, drop it
      }
    }
  }

  out.graph = mapping::build_graph(odometry, loops, &out.dropped_loops);
  if (options.loop_closure && !loops.empty()) {
    out.graph = mapping::optimize(out.graph, options.lm).graph;
  }
  out.trajectory.reserve(out.graph.nodes.size());
  for (std::size_t i = 0; i < out.graph.nodes.size(); ++i) {
    Pose p;
    p.transform = out.graph.nodes[i];
    p.timestamp = static_cast<double>(i);
    out.trajectory.push_back(p);
  }
  return out;
}

}  // namespace scanfeat::pipeline
