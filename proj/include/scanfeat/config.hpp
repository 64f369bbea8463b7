#pragma once

#include <cstdint>
#include <string>

#include "scanfeat/bench/evaluate.hpp"
#include "scanfeat/extract/handcrafted.hpp"
#include "scanfeat/featnet/train.hpp"
#include "scanfeat/pairgen/real_pairs.hpp"
#include "scanfeat/pairgen/synthetic.hpp"
#include "scanfeat/mapping/pose_graph.hpp"

namespace scanfeat {

/// One layered document carrying every stage's defaults. Loadable from JSON
/// with partial overrides; unknown keys are rejected.
struct PipelineConfig {
  std::uint64_t seed = 0;

  // keypoint extraction
  double score_threshold = 0.7;
  int nms_radius = 8;

  // benchmark thresholds
  double tau1 = 0.3;
  double tau2 = 0.2;
  double tau3 = 0.3;

  // pair selection
  double overlap_threshold = 0.2;
  double shell_inner = 1.0;
  double shell_outer = 5.0;
  double correspondence_distance = 0.2;
  double occlusion_margin = 0.5;
  std::size_t anchor_stride = 10;

  // synthetic warps
  pairgen::SyntheticParamRanges synth;

  // network and training
  featnet::NetworkConfig network;
  featnet::TrainSchedule schedule;
  featnet::TrainConfig training;
  featnet::CropConfig crop;

  // registration
  double ransac_inlier_dist = 0.3;
  int ransac_iterations = 1000;
  reg::IcpConfig icp;

  // mapping
  std::size_t vocab_k = 180;
  double hist_threshold = 0.8;
  std::size_t min_loop_gap = 10;
  std::size_t min_loop_inliers = 15;
  mapping::OptimizeOptions lm;

  extract::HandcraftedConfig handcrafted;
};

/// Parses overrides from JSON; missing keys keep defaults. Throws
/// ConfigError on unknown keys or malformed values.
PipelineConfig load_config(const std::string& path);

/// Full resolved config as pretty JSON (the log of record for a run).
std::string config_to_json(const PipelineConfig& config);

}  // namespace scanfeat
