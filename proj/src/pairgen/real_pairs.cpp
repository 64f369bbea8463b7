#include "scanfeat/pairgen/real_pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scanfeat/core/grid_index.hpp"
#include "scanfeat/core/rng.hpp"

namespace scanfeat::pairgen {

double overlap(const OrderedPointCloud& a, const OrderedPointCloud& b,
               const RigidTransform& t, double corr_dist) {
  std::vector<Eigen::Vector3d> b_points;
  b_points.reserve(b.points.size());
  for (std::size_t i = 0; i < b.points.size(); ++i) {
    if (b.valid[i]) b_points.push_back(b.points[i]);
  }
  std::size_t total = 0;
  std::size_t inside = 0;
  const GridIndex index(b_points, corr_dist);
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (!a.valid[i]) continue;
    ++total;
    if (!b_points.empty() &&
        index.has_neighbor_within(t.apply(a.points[i]), corr_dist)) {
      ++inside;
    }
  }
  if (total == 0) throw EmptyCloud("overlap: first cloud has no valid points");
  return static_cast<double>(inside) / static_cast<double>(total);
}

std::vector<PairRecord> select_real_pairs(const std::vector<Pose>& poses,
                                          const CloudAccessor& clouds,
                                          const PairSelectionConfig& cfg,
                                          std::size_t anchor_stride,
                                          std::uint64_t seed,
                                          PairSelectionStats* stats) {
  if (anchor_stride == 0) throw Error("anchor_stride must be positive");
  std::vector<PairRecord> out;
  PairSelectionStats st;
  for (std::size_t anchor = 0; anchor < poses.size();
       anchor += anchor_stride) {
    ++st.anchors_tried;
    const Eigen::Vector3d center = poses[anchor].transform.translation;
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < poses.size(); ++j) {
      if (j == anchor) continue;
      const double d = (poses[j].transform.translation - center).norm();
      if (d >= cfg.inner_radius && d <= cfg.outer_radius) {
        candidates.push_back(j);
      }
    }
    // per-anchor stream so parallel and sequential runs agree
    Rng rng(Rng::mix(seed, anchor));
    rng.shuffle(candidates);
    bool accepted = false;
    for (std::size_t j : candidates) {
      const RigidTransform t =
          relative_transform(poses[anchor], poses[j]);
      const double omega = overlap(clouds(anchor), clouds(j), t,
                                   cfg.correspondence_distance);
      if (omega > cfg.overlap_threshold) {
        out.push_back({anchor, j, t});
        accepted = true;
        break;
      }
    }
    if (!accepted) ++st.anchors_skipped;
  }
  if (stats) *stats = st;
  return out;
}

FlowMap pixel_flow(const OrderedPointCloud& a, const ScanImage& b_image,
                   const RigidTransform& t, const SphericalModel& model,
                   double occlusion_margin) {
  if (!model.consistent_with(b_image.height, b_image.width)) {
    throw Error("pixel_flow: model inconsistent with target image");
  }
  FlowMap flow(a.height, a.width);
  const int w = b_image.width;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      if (!a.is_valid(r, c)) continue;
      const Eigen::Vector3d p = t.apply(a.point(r, c));
      const double range = p.norm();
      if (!(range > 0.0)) continue;
      const double elevation =
          std::asin(std::clamp(p.z() / range, -1.0, 1.0));
      double row_f;
      if (!model.elevation_to_row(elevation, &row_f)) continue;
      double col_f = std::fmod(model.azimuth_to_col(std::atan2(p.y(), p.x())),
                               static_cast<double>(w));
      if (col_f < 0.0) col_f += w;
      const int trow = static_cast<int>(std::floor(row_f + 0.5));
      if (trow < 0 || trow >= b_image.height) continue;
      int tcol = static_cast<int>(std::floor(col_f + 0.5)) % w;
      if (!b_image.is_valid(trow, tcol)) continue;
      if (range > b_image.range[b_image.idx(trow, tcol)] + occlusion_margin) {
        continue;  // hidden behind a nearer surface in b
      }
      const std::size_t at = flow.idx(r, c);
      flow.target_u[at] = col_f;
      flow.target_v[at] = row_f;
      flow.valid[at] = 1;
    }
  }
  return flow;
}

std::vector<PairRecord> load_pair_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair manifest: " + path);
  std::vector<PairRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    PairRecord rec;
    ss >> rec.anchor >> rec.partner;
    double m[12];
    for (double& v : m) ss >> v;
    if (!ss) {
      throw IoError("malformed pair at " + path + ":" +
                    std::to_string(lineno));
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) rec.transform.rotation(i, j) = m[i * 4 + j];
      rec.transform.translation[i] = m[i * 4 + 3];
    }
    rec.transform = orthonormalized(rec.transform);
    out.push_back(rec);
  }
  return out;
}

void save_pair_manifest(const std::string& path,
                        const std::vector<PairRecord>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pair manifest: " + path);
  out.precision(17);
  for (const PairRecord& rec : pairs) {
    out << rec.anchor << ' ' << rec.partner;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) out << ' ' << rec.transform.rotation(i, j);
      out << ' ' << rec.transform.translation[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scanfeat::pairgen
