#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scanfeat/config.hpp"
#include "scanfeat/extract/extract.hpp"
#include "scanfeat/extract/handcrafted.hpp"
#include "scanfeat/featnet/weights_io.hpp"
#include "scanfeat/mapping/pose_graph.hpp"
#include "scanfeat/projection/projection.hpp"
#include "scanfeat/projection/scan_io.hpp"

namespace scanfeat::pipeline {

/// Scan image plus its projection model and reconstructed 3D cloud.
struct LoadedScan {
  ScanImage image;
  SphericalModel model;
  OrderedPointCloud cloud;
};

/// Loads a scan file that carries an elevation table and lifts it back to an
/// ordered cloud. Throws IoError when the table is missing.
LoadedScan load_scan_with_cloud(const std::string& path);

LoadedScan from_cloud(const OrderedPointCloud& cloud,
                      const SphericalModel& model);

/// All *.scni files of a directory in lexicographic order.
std::vector<std::string> list_scan_files(const std::string& dir);

/// Dense-map source plus thresholded extraction, either from trained weights
/// (inputs normalized with the stats stored beside them) or the handcrafted
/// fallback.
class FeatureExtractor {
 public:
  static FeatureExtractor handcrafted(const extract::HandcraftedConfig& cfg,
                                      double score_threshold, int nms_radius);
  static FeatureExtractor from_weights_file(const std::string& path,
                                            double score_threshold,
                                            int nms_radius);
  static FeatureExtractor from_weights(featnet::WeightsFile weights,
                                       double score_threshold, int nms_radius);

  extract::FeatureSet run(const LoadedScan& scan) const;
  featnet::DenseFeatureMap maps(const ScanImage& image) const;

 private:
  FeatureExtractor() = default;
  std::optional<featnet::WeightsFile> weights_;
  extract::HandcraftedConfig handcrafted_cfg_;
  double score_threshold_ = 0.7;
  int nms_radius_ = 8;
};

struct SlamOptions {
  bool loop_closure = false;
  bool refine_with_icp = false;
  double ransac_inlier_dist = 0.3;
  int ransac_iterations = 1000;
  std::uint64_t seed = 0;
  std::size_t vocab_k = 180;
  double hist_threshold = 0.8;
  std::size_t min_loop_gap = 10;
  std::size_t min_loop_inliers = 15;
  reg::IcpConfig icp;
  mapping::OptimizeOptions lm;
};

struct SlamResult {
  std::vector<Pose> trajectory;  // timestamps are scan indices
  mapping::PoseGraph graph;
  std::size_t proposed_loops = 0;
  std::size_t accepted_loops = 0;
  std::size_t dropped_loops = 0;
};

/// Scan-to-scan odometry chain, optional BoVW loop proposal with geometric
/// verification, and pose-graph optimization when loops are enabled.
SlamResult run_slam(const std::vector<LoadedScan>& scans,
                    const FeatureExtractor& extractor,
                    const SlamOptions& options);

}  // namespace scanfeat::pipeline
