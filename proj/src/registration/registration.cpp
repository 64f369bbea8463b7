#include "scanfeat/registration/registration.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

#include "scanfeat/core/grid_index.hpp"
#include "scanfeat/core/rng.hpp"

namespace scanfeat::reg {

MatchSet match(const extract::FeatureSet& a, const extract::FeatureSet& b,
               const MatchConfig& config) {
  if (a.size() == 0 || b.size() == 0) {
    throw EmptySet("match: empty feature set");
  }
  if (a.dim() != b.dim()) {
    throw Error("match: descriptor dimensions disagree");
  }
  const std::size_t na = a.size();
  const std::size_t nb = b.size();

  // nearest (and second nearest) neighbor of every a in b
  std::vector<std::size_t> best_b(na);
  std::vector<double> best_d(na), second_d(na);
  for (std::size_t i = 0; i < na; ++i) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = d1;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = (a.descriptors[i] - b.descriptors[j]).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
        arg = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    best_b[i] = arg;
    best_d[i] = d1;
    second_d[i] = d2;
  }
  // nearest neighbor of every b in a
  std::vector<std::size_t> best_a(nb);
  for (std::size_t j = 0; j < nb; ++j) {
    double d1 = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < na; ++i) {
      const double d = (a.descriptors[i] - b.descriptors[j]).norm();
      if (d < d1) {
        d1 = d;
        arg = i;
      }
    }
    best_a[j] = arg;
  }

  MatchSet out;
  for (std::size_t i = 0; i < na; ++i) {
    if (best_a[best_b[i]] != i) continue;
    if (config.ratio_test && best_d[i] > config.ratio * second_d[i]) continue;
    out.pairs.push_back({i, best_b[i], best_d[i]});
  }
  return out;
}

RigidTransform fit_rigid(const std::vector<Eigen::Vector3d>& from,
                         const std::vector<Eigen::Vector3d>& to) {
  if (from.size() != to.size() || from.size() < 3) {
    throw TooFewMatches("rigid fit needs >= 3 aligned points");
  }
  const std::size_t n = from.size();
  Eigen::Vector3d ca = Eigen::Vector3d::Zero();
  Eigen::Vector3d cb = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    ca += from[i];
    cb += to[i];
  }
  ca /= static_cast<double>(n);
  cb /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cov += (to[i] - cb) * (from[i] - ca).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;  // reflection guard
  }
  RigidTransform t;
  t.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  t.translation = cb - t.rotation * ca;
  return t;
}

namespace {

bool collinear(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
               const Eigen::Vector3d& p2) {
  return (p1 - p0).cross(p2 - p0).norm() < 1e-9;
}

}  // namespace

RegistrationResult estimate_rigid(const MatchSet& matches,
                                  const extract::FeatureSet& a,
                                  const extract::FeatureSet& b,
                                  double inlier_dist, int iterations,
                                  std::uint64_t seed) {
  const std::size_t n = matches.pairs.size();
  if (n < 3) throw TooFewMatches("RANSAC needs >= 3 matches");

  std::vector<Eigen::Vector3d> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = a.keypoints[matches.pairs[i].index_a].point;
    pb[i] = b.keypoints[matches.pairs[i].index_b].point;
  }

  Rng rng(seed);
  RegistrationResult best;
  bool any_hypothesis = false;
  const double thresh2 = inlier_dist * inlier_dist;
  for (int it = 0; it < iterations; ++it) {
    std::size_t i0 = rng.index(n);
    std::size_t i1 = rng.index(n);
    std::size_t i2 = rng.index(n);
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    if (collinear(pa[i0], pa[i1], pa[i2])) continue;
    RigidTransform hyp;
    try {
      hyp = fit_rigid({pa[i0], pa[i1], pa[i2]}, {pb[i0], pb[i1], pb[i2]});
    } catch (const Error&) {
      continue;
    }
    any_hypothesis = true;
    std::size_t inliers = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((hyp.apply(pa[i]) - pb[i]).squaredNorm() < thresh2) ++inliers;
    }
    if (inliers > best.inlier_count) {
      best.inlier_count = inliers;
      best.transform = hyp;
    }
  }
  if (!any_hypothesis) {
    throw Degenerate("no usable 3-point sample found");
  }
  if (best.inlier_count < 3) {
    best.converged = false;
    return best;
  }
  // collect the consensus of the winning hypothesis, then refit on it
  best.inlier_indices.clear();
  std::vector<Eigen::Vector3d> fa, fb;
  for (std::size_t i = 0; i < n; ++i) {
    if ((best.transform.apply(pa[i]) - pb[i]).squaredNorm() < thresh2) {
      best.inlier_indices.push_back(i);
      fa.push_back(pa[i]);
      fb.push_back(pb[i]);
    }
  }
  best.inlier_count = best.inlier_indices.size();
  best.transform = fit_rigid(fa, fb);
  best.converged = true;
  return best;
}

IcpResult refine_icp(const RigidTransform& initial,
                     const OrderedPointCloud& a_cloud,
                     const OrderedPointCloud& b_cloud,
                     const IcpConfig& config) {
  std::vector<Eigen::Vector3d> src;
  src.reserve(a_cloud.points.size());
  for (std::size_t i = 0; i < a_cloud.points.size(); ++i) {
    if (a_cloud.valid[i]) src.push_back(a_cloud.points[i]);
  }
  if (src.size() > config.max_source_points) {
    const std::size_t stride = src.size() / config.max_source_points + 1;
    std::vector<Eigen::Vector3d> sub;
    for (std::size_t i = 0; i < src.size(); i += stride) sub.push_back(src[i]);
    src = std::move(sub);
  }
  std::vector<Eigen::Vector3d> dst;
  dst.reserve(b_cloud.points.size());
  for (std::size_t i = 0; i < b_cloud.points.size(); ++i) {
    if (b_cloud.valid[i]) dst.push_back(b_cloud.points[i]);
  }
  if (src.empty() || dst.empty()) {
    throw NoCorrespondences("icp: empty cloud");
  }
  const GridIndex index(dst, config.correspondence_distance);

  // residual: RMS over all source points of the NN distance clipped at the
  // correspondence radius; re-pairing and refitting both decrease it, so the
  // recorded sequence is non-increasing by construction
  const double corr = config.correspondence_distance;
  const auto pair_up = [&](const RigidTransform& t,
                           std::vector<Eigen::Vector3d>& fa,
                           std::vector<Eigen::Vector3d>& fb) {
    fa.clear();
    fb.clear();
    double sum2 = 0.0;
    for (const Eigen::Vector3d& p : src) {
      const auto [j, d] = index.nearest_within(t.apply(p), corr);
      if (j == GridIndex::npos) {
        sum2 += corr * corr;
        continue;
      }
      fa.push_back(p);
      fb.push_back(dst[j]);
      sum2 += d * d;
    }
    return std::sqrt(sum2 / static_cast<double>(src.size()));
  };

  IcpResult out;
  out.transform = initial;
  std::vector<Eigen::Vector3d> fa, fb;
  double rms = pair_up(initial, fa, fb);
  if (fa.size() < 3) {
    throw NoCorrespondences("icp: no point pairs in range");
  }
  out.residuals.push_back(rms);
  for (int it = 0; it < config.max_iterations; ++it) {
    const RigidTransform refit = fit_rigid(fa, fb);
    std::vector<Eigen::Vector3d> na, nb;
    const double next = pair_up(refit, na, nb);
    if (!(next <= rms + 1e-12) || na.size() < 3) break;
    out.transform = refit;
    const double improvement = rms - next;
    rms = std::min(next, rms);
    out.residuals.push_back(rms);
    fa.swap(na);
    fb.swap(nb);
    if (improvement < config.min_residual_change) break;
  }
  out.converged = true;
  return out;
}

}  // namespace scanfeat::reg
