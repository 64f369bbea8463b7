#include "scanfeat/bench/evaluate.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

namespace scanfeat::bench {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

BenchmarkReport evaluate_pairs(const std::vector<pairgen::PairRecord>& manifest,
                               const FeatureProvider& features,
                               const BenchThresholds& thresholds,
                               const RansacParams& ransac) {
  if (manifest.empty()) throw Error("empty pair manifest");
  BenchmarkReport report;
  double extract_ms = 0.0, match_ms = 0.0, ransac_ms = 0.0;
  std::size_t extract_count = 0;

  for (const pairgen::PairRecord& rec : manifest) {
    PairEvaluation row;
    row.anchor = rec.anchor;
    row.partner = rec.partner;
    try {
      auto t0 = std::chrono::steady_clock::now();
      const extract::FeatureSet fa = features(rec.anchor);
      const extract::FeatureSet fb = features(rec.partner);
      extract_ms += ms_since(t0);
      extract_count += 2;

      row.repeatability = repeatability(fa, fb, rec.transform, thresholds.tau1);

      t0 = std::chrono::steady_clock::now();
      const reg::MatchSet matches = reg::match(fa, fb);
      match_ms += ms_since(t0);
      row.matches = matches.pairs.size();
      row.inlier_ratio =
          match_inlier_ratio(matches, fa, fb, rec.transform, thresholds.tau1);

      t0 = std::chrono::steady_clock::now();
      const reg::RegistrationResult est =
          reg::estimate_rigid(matches, fa, fb, ransac.inlier_dist,
                              ransac.iterations, ransac.seed);
      ransac_ms += ms_since(t0);
      if (!est.converged) throw Error("registration did not converge");
      row.ransac_inliers = est.inlier_count;
      const RegistrationErrors err =
          registration_errors(est.transform, rec.transform);
      row.translation_error = err.translation;
      row.rotation_error_deg = err.rotation_deg;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    report.pairs.push_back(std::move(row));
  }

  if (extract_count > 0) {
    report.timing.extract_ms = extract_ms / static_cast<double>(extract_count);
  }
  const double np = static_cast<double>(manifest.size());
  report.timing.match_ms = match_ms / np;
  report.timing.ransac_ms = ransac_ms / np;
  recompute_aggregates(report, thresholds);
  return report;
}

void recompute_aggregates(BenchmarkReport& report,
                          const BenchThresholds& thresholds) {
  double rs = 0.0;
  std::size_t mr = 0, rr = 0;
  for (const PairEvaluation& row : report.pairs) {
    if (!row.ok) continue;  // failures contribute zero
    rs += row.repeatability;
    if (row.inlier_ratio > thresholds.tau2) ++mr;
    if (row.translation_error < thresholds.tau3) ++rr;
  }
  const double n = static_cast<double>(report.pairs.size());
  report.rs = 100.0 * rs / n;
  report.mr = 100.0 * static_cast<double>(mr) / n;
  report.rr = 100.0 * static_cast<double>(rr) / n;
}

void save_report_json(const std::string& path, const BenchmarkReport& report,
                      const BenchThresholds& thresholds) {
  nlohmann::json j;
  j["thresholds"] = {{"tau1", thresholds.tau1},
                     {"tau2", thresholds.tau2},
                     {"tau3", thresholds.tau3}};
  j["aggregates"] = {{"repeatability_score", report.rs},
                     {"matching_recall", report.mr},
                     {"registration_recall", report.rr}};
  j["pairs"] = nlohmann::json::array();
  for (const PairEvaluation& row : report.pairs) {
    nlohmann::json r;
    r["anchor"] = row.anchor;
    r["partner"] = row.partner;
    r["ok"] = row.ok;
    if (!row.ok) r["error"] = row.error;
    r["repeatability"] = row.repeatability;
    r["inlier_ratio"] = row.inlier_ratio;
    r["translation_error"] = row.translation_error;
    r["rotation_error_deg"] = row.rotation_error_deg;
    r["matches"] = row.matches;
    r["ransac_inliers"] = row.ransac_inliers;
    j["pairs"].push_back(r);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

void save_report_csv(const std::string& path, const BenchmarkReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report csv: " + path);
  out.precision(12);
  out << "anchor,partner,ok,repeatability,inlier_ratio,translation_error,"
         "rotation_error_deg,matches,ransac_inliers\n";
  for (const PairEvaluation& row : report.pairs) {
    out << row.anchor << ',' << row.partner << ',' << (row.ok ? 1 : 0) << ','
        << row.repeatability << ',' << row.inlier_ratio << ','
        << row.translation_error << ',' << row.rotation_error_deg << ','
        << row.matches << ',' << row.ransac_inliers << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scanfeat::bench
