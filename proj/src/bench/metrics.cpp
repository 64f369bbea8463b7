#include "scanfeat/bench/metrics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "scanfeat/registration/registration.hpp"

namespace scanfeat::bench {

double repeatability(const extract::FeatureSet& a, const extract::FeatureSet& b,
                     const RigidTransform& t_gt, double tau) {
  if (a.size() == 0 || b.size() == 0) {
    throw reg::EmptySet("repeatability: empty feature set");
  }
  std::size_t inliers = 0;
  for (const extract::Keypoint& ka : a.keypoints) {
    const Eigen::Vector3d p = t_gt.apply(ka.point);
    double best = std::numeric_limits<double>::infinity();
    for (const extract::Keypoint& kb : b.keypoints) {
      best = std::min(best, (p - kb.point).norm());
    }
    if (best < tau) ++inliers;
  }
  const double denom = static_cast<double>(std::min(a.size(), b.size()));
  return std::min(1.0, static_cast<double>(inliers) / denom);
}

double match_inlier_ratio(const reg::MatchSet& matches,
                          const extract::FeatureSet& a,
                          const extract::FeatureSet& b,
                          const RigidTransform& t_gt, double tau) {
  if (matches.pairs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const reg::Match& m : matches.pairs) {
    const Eigen::Vector3d pa = t_gt.apply(a.keypoints[m.index_a].point);
    const Eigen::Vector3d& pb = b.keypoints[m.index_b].point;
    if ((pa - pb).norm() < tau) ++correct;
  }
  return static_cast<double>(correct) /
         static_cast<double>(matches.pairs.size());
}

RegistrationErrors registration_errors(const RigidTransform& t_est,
                                       const RigidTransform& t_gt) {
  const RigidTransform rel = compose(t_gt.inverse(), t_est);
  RegistrationErrors out;
  out.translation = rel.translation.norm();
  out.rotation_deg = rotation_angle(rel.rotation) * 180.0 / std::numbers::pi;
  return out;
}

TrajectoryErrors trajectory_errors(const std::vector<Pose>& estimate,
                                   const std::vector<Pose>& ground_truth) {
  if (estimate.size() != ground_truth.size()) {
    throw LengthMismatch("trajectory lengths disagree");
  }
  if (estimate.empty()) throw LengthMismatch("empty trajectories");

  // gauge-fixing rigid alignment of estimated positions onto ground truth
  RigidTransform align = RigidTransform::identity();
  if (estimate.size() >= 3) {
    std::vector<Eigen::Vector3d> from, to;
    from.reserve(estimate.size());
    to.reserve(estimate.size());
    for (std::size_t i = 0; i < estimate.size(); ++i) {
      from.push_back(estimate[i].transform.translation);
      to.push_back(ground_truth[i].transform.translation);
    }
    bool degenerate = true;
    for (std::size_t i = 2; i < from.size() && degenerate; ++i) {
      if ((from[1] - from[0]).cross(from[i] - from[0]).norm() > 1e-12) {
        degenerate = false;
      }
    }
    if (!degenerate) {
      align = reg::fit_rigid(from, to);
    } else {
      // collinear or constant positions: align by centroid shift only
      Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = ca;
      for (std::size_t i = 0; i < from.size(); ++i) {
        ca += from[i];
        cb += to[i];
      }
      align.translation = (cb - ca) / static_cast<double>(from.size());
    }
  } else {
    align.translation = ground_truth[0].transform.translation -
                        estimate[0].transform.translation;
  }

  TrajectoryErrors out;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const RigidTransform aligned = compose(align, estimate[i].transform);
    out.mean_translation +=
        (aligned.translation - ground_truth[i].transform.translation).norm();
    out.mean_rotation_deg +=
        rotation_angle(ground_truth[i].transform.rotation.transpose() *
                       aligned.rotation) *
        180.0 / std::numbers::pi;
  }
  out.mean_translation /= static_cast<double>(estimate.size());
  out.mean_rotation_deg /= static_cast<double>(estimate.size());
  return out;
}

}  // namespace scanfeat::bench
