#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/pairgen/flow.hpp"
#include "scanfeat/projection/scan_image.hpp"

namespace scanfeat::pairgen {

struct EmptyCloud : Error {
  explicit EmptyCloud(const std::string& msg) : Error(msg) {}
};

/// Shell sampling and gating parameters for training-pair selection.
struct PairSelectionConfig {
  double inner_radius = 1.0;        // meters
  double outer_radius = 5.0;        // meters
  double overlap_threshold = 0.2;   // fraction
  double correspondence_distance = 0.2;  // meters
  double occlusion_margin = 0.5;    // meters
};

/// Fraction of a's valid points with a neighbor in b closer than corr_dist
/// after mapping a through T (a-frame into b-frame). Throws EmptyCloud when
/// a has no valid points.
double overlap(const OrderedPointCloud& a, const OrderedPointCloud& b,
               const RigidTransform& t, double corr_dist);

struct PairRecord {
  std::size_t anchor = 0;
  std::size_t partner = 0;
  RigidTransform transform;  // anchor frame into partner frame
};

struct PairSelectionStats {
  std::size_t anchors_tried = 0;
  std::size_t anchors_skipped = 0;  // no candidate passed the overlap gate
};

using CloudAccessor = std::function<const OrderedPointCloud&(std::size_t)>;

/// For every anchor_stride-th scan, samples shell candidates uniformly
/// without replacement until one passes the overlap gate. Deterministic under
/// the seed; anchors with no accepted partner are skipped and counted.
std::vector<PairRecord> select_real_pairs(const std::vector<Pose>& poses,
                                          const CloudAccessor& clouds,
                                          const PairSelectionConfig& cfg,
                                          std::size_t anchor_stride,
                                          std::uint64_t seed,
                                          PairSelectionStats* stats = nullptr);

/// Ground-truth correspondence map from cloud a into image b. An entry is
/// dropped when the source pixel is invalid, the target row leaves the image,
/// the target pixel of b is invalid, or the projected range exceeds b's range
/// at the target by more than occlusion_margin (hidden behind a nearer
/// surface).
FlowMap pixel_flow(const OrderedPointCloud& a, const ScanImage& b_image,
                   const RigidTransform& t, const SphericalModel& model,
                   double occlusion_margin);

/// Pair manifest: text, one pair per line,
/// "anchor_index partner_index t00 t01 ... t23" (row-major 3x4 transform).
std::vector<PairRecord> load_pair_manifest(const std::string& path);
void save_pair_manifest(const std::string& path,
                        const std::vector<PairRecord>& pairs);

}  // namespace scanfeat::pairgen
