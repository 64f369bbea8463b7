#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scanfeat/bench/metrics.hpp"
#include "scanfeat/pairgen/real_pairs.hpp"

namespace scanfeat::bench {

struct BenchThresholds {
  double tau1 = 0.3;  // meters, keypoint inlier radius
  double tau2 = 0.2;  // match inlier-ratio gate
  double tau3 = 0.3;  // meters, registration recall gate
};

struct RansacParams {
  double inlier_dist = 0.3;
  int iterations = 1000;
  std::uint64_t seed = 0;
};

/// One manifest row's outcome. Failed pairs carry the error text and count
/// against every aggregate.
struct PairEvaluation {
  std::size_t anchor = 0;
  std::size_t partner = 0;
  bool ok = false;
  std::string error;
  double repeatability = 0.0;
  double inlier_ratio = 0.0;
  double translation_error = 0.0;
  double rotation_error_deg = 0.0;
  std::size_t matches = 0;
  std::size_t ransac_inliers = 0;
};

struct StageTiming {
  double extract_ms = 0.0;  // per-scan average
  double match_ms = 0.0;    // per-pair average
  double ransac_ms = 0.0;   // per-pair average
};

struct BenchmarkReport {
  double rs = 0.0;  // mean repeatability, percent
  double mr = 0.0;  // pairs with inlier ratio > tau2, percent
  double rr = 0.0;  // pairs with translation error < tau3, percent
  std::vector<PairEvaluation> pairs;
  StageTiming timing;
};

using FeatureProvider = std::function<extract::FeatureSet(std::size_t)>;

/// Runs repeatability / matching / registration per manifest pair and
/// aggregates. Per-pair failures are recorded, never fatal.
BenchmarkReport evaluate_pairs(const std::vector<pairgen::PairRecord>& manifest,
                               const FeatureProvider& features,
                               const BenchThresholds& thresholds,
                               const RansacParams& ransac);

/// Recomputes the three aggregates from the per-pair table.
void recompute_aggregates(BenchmarkReport& report,
                          const BenchThresholds& thresholds);

/// report.json (deterministic content; timing is kept out so identical runs
/// produce identical bytes) and a per-pair CSV table.
void save_report_json(const std::string& path, const BenchmarkReport& report,
                      const BenchThresholds& thresholds);
void save_report_csv(const std::string& path, const BenchmarkReport& report);

}  // namespace scanfeat::bench
