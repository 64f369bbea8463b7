#pragma once

#include <cstdint>
#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/extract/extract.hpp"

namespace scanfeat::reg {

struct EmptySet : Error {
  explicit EmptySet(const std::string& msg) : Error(msg) {}
};
struct TooFewMatches : Error {
  explicit TooFewMatches(const std::string& msg) : Error(msg) {}
};
struct Degenerate : Error {
  explicit Degenerate(const std::string& msg) : Error(msg) {}
};
struct NoCorrespondences : Error {
  explicit NoCorrespondences(const std::string& msg) : Error(msg) {}
};

struct Match {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double distance = 0.0;  // descriptor distance
};

struct MatchSet {
  std::vector<Match> pairs;
};

struct MatchConfig {
  bool ratio_test = false;
  double ratio = 0.8;  // Lowe ratio when enabled
};

/// Mutual nearest neighbors in descriptor space (exact linear scan).
/// Throws EmptySet when either input has no keypoints.
MatchSet match(const extract::FeatureSet& a, const extract::FeatureSet& b,
               const MatchConfig& config = {});

/// Closed-form least-squares rigid fit (SVD orthogonal Procrustes with a
/// reflection guard). Point sets must be index-aligned and of equal size >= 3.
RigidTransform fit_rigid(const std::vector<Eigen::Vector3d>& from,
                         const std::vector<Eigen::Vector3d>& to);

struct RegistrationResult {
  RigidTransform transform;  // maps a-frame points into b's frame
  std::size_t inlier_count = 0;
  std::vector<std::size_t> inlier_indices;  // into the match set
  bool converged = false;
};

/// RANSAC over 3-match samples with consensus refit. Deterministic in the
/// seed; among equal consensus sizes the earliest hypothesis wins.
RegistrationResult estimate_rigid(const MatchSet& matches,
                                  const extract::FeatureSet& a,
                                  const extract::FeatureSet& b,
                                  double inlier_dist, int iterations,
                                  std::uint64_t seed);

struct IcpConfig {
  int max_iterations = 30;
  double correspondence_distance = 0.5;
  double min_residual_change = 1e-6;
  std::size_t max_source_points = 20000;  // uniform subsample above this
};

struct IcpResult {
  RigidTransform transform;
  std::vector<double> residuals;  // RMS per accepted iteration
  bool converged = false;
};

/// Point-to-point ICP from an initial transform; the residual sequence is
/// non-increasing (a worsening step stops the iteration). Throws
/// NoCorrespondences when the initial alignment admits no pairs.
IcpResult refine_icp(const RigidTransform& initial,
                     const OrderedPointCloud& a_cloud,
                     const OrderedPointCloud& b_cloud, const IcpConfig& config);

}  // namespace scanfeat::reg
