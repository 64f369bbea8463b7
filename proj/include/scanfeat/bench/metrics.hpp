#pragma once

#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/extract/extract.hpp"
#include "scanfeat/registration/registration.hpp"

namespace scanfeat::bench {

struct LengthMismatch : Error {
  explicit LengthMismatch(const std::string& msg) : Error(msg) {}
};

/// Fraction of a's keypoints with a counterpart in b within tau after the
/// ground-truth alignment, over min(|a|, |b|), clamped to [0, 1].
double repeatability(const extract::FeatureSet& a, const extract::FeatureSet& b,
                     const RigidTransform& t_gt, double tau);

/// Fraction of matches whose endpoints land within tau of each other under
/// the ground-truth alignment. An empty match set rates 0.
double match_inlier_ratio(const reg::MatchSet& matches,
                          const extract::FeatureSet& a,
                          const extract::FeatureSet& b,
                          const RigidTransform& t_gt, double tau);

struct RegistrationErrors {
  double translation = 0.0;  // meters
  double rotation_deg = 0.0;
};

/// Errors of the relative transform inverse(t_gt) * t_est.
RegistrationErrors registration_errors(const RigidTransform& t_est,
                                       const RigidTransform& t_gt);

struct TrajectoryErrors {
  double mean_translation = 0.0;  // meters
  double mean_rotation_deg = 0.0;
};

/// Rigidly aligns the estimate onto the ground truth (Procrustes over
/// positions) and averages per-pose position and orientation errors.
TrajectoryErrors trajectory_errors(const std::vector<Pose>& estimate,
                                   const std::vector<Pose>& ground_truth);

}  // namespace scanfeat::bench
