#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/featnet/network.hpp"

namespace scanfeat::extract {

/// Sparse 3D keypoints with index-aligned unit descriptors, sorted by
/// descending score.
struct Keypoint {
  int u = 0;  // column
  int v = 0;  // row
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double score = 0.0;
};

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Eigen::VectorXd> descriptors;

  std::size_t size() const { return keypoints.size(); }
  int dim() const {
    return descriptors.empty() ? 0 : static_cast<int>(descriptors[0].size());
  }
};

/// S = reliability * repeatability, elementwise.
featnet::Tensor fuse_scores(const featnet::DenseFeatureMap& maps);

/// Threshold on the fused score, column-circular Chebyshev NMS (a candidate
/// survives iff no better-scoring candidate lies within nms_radius; score
/// ties keep the smaller (row, col) index), removal of keypoints on invalid
/// cloud cells, and 3D lifting through the ordered cloud.
FeatureSet extract(const featnet::DenseFeatureMap& maps,
                   const OrderedPointCloud& cloud, double score_threshold,
                   int nms_radius);

/// Feature file: magic "F3DL", u32 count, u32 d, then per keypoint
/// u32 u, u32 v, f32x3 point, f32 score, f32xd descriptor.
FeatureSet load_features(const std::string& path);
void save_features(const std::string& path, const FeatureSet& features);

}  // namespace scanfeat::extract
