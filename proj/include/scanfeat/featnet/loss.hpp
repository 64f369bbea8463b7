#pragma once

#include <cstdint>
#include <vector>

#include "scanfeat/featnet/network.hpp"
#include "scanfeat/pairgen/flow.hpp"

namespace scanfeat::featnet {

struct NoValidCorrespondences : Error {
  explicit NoValidCorrespondences(const std::string& msg) : Error(msg) {}
};

/// Three-term twin-network loss:
///  - repeatability: 1 - cosine similarity between the first repeatability
///    map and the flow-warped second one, averaged over NxN patches;
///  - peakiness: 1 - mean over patches of (max - mean), for both maps;
///  - reliability: differentiable average precision of descriptor matching
///    per query pixel over candidates along its flow target row, gated by
///    the reliability score.
struct LossConfig {
  int patch_size = 8;
  double weight_repeatability = 1.0;
  double weight_peakiness = 0.5;
  double weight_reliability = 1.0;
  double ap_kappa = 0.5;       // reliability gate constant
  int ap_bins = 25;            // similarity histogram bins over [-1, 1]
  double positive_radius = 2.0;  // px along the target row
  int query_stride = 2;        // reliability queries sampled on this grid
  int candidate_window = -1;   // columns around the target; -1 = full row
  bool circular_columns = true;
};

struct LossBreakdown {
  double total = 0.0;
  double repeatability = 0.0;
  double peakiness = 0.0;
  double reliability = 0.0;
  std::size_t valid_correspondences = 0;
  std::size_t reliability_queries = 0;
};

/// Computes the loss and, when grad_a/grad_b are given, accumulates analytic
/// gradients with respect to both maps. Masks carry per-pixel image validity
/// (empty = all valid); invalid pixels contribute to no term. Throws
/// NoValidCorrespondences when the flow has no valid entries.
LossBreakdown loss(const DenseFeatureMap& map_a, const DenseFeatureMap& map_b,
                   const FlowMap& flow,
                   const std::vector<std::uint8_t>& mask_a,
                   const std::vector<std::uint8_t>& mask_b,
                   const LossConfig& config, MapGradients* grad_a = nullptr,
                   MapGradients* grad_b = nullptr);

}  // namespace scanfeat::featnet
