#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "scanfeat/errors.hpp"
#include "scanfeat/extract/extract.hpp"

namespace scanfeat::mapping {

struct TooFewDescriptors : Error {
  explicit TooFewDescriptors(const std::string& msg) : Error(msg) {}
};
struct EmptyFeatureSet : Error {
  explicit EmptyFeatureSet(const std::string& msg) : Error(msg) {}
};

struct Vocabulary {
  std::vector<Eigen::VectorXd> centroids;

  std::size_t size() const { return centroids.size(); }
  int dim() const {
    return centroids.empty() ? 0 : static_cast<int>(centroids[0].size());
  }
};

/// Lloyd's k-means with k-means++ seeding; iterates to an assignment
/// fixpoint or 100 rounds. Deterministic under the seed. Throws
/// TooFewDescriptors when fewer than k distinct descriptors exist.
Vocabulary build_vocabulary(const std::vector<Eigen::VectorXd>& descriptors,
                            std::size_t k, std::uint64_t seed);

/// Index of the nearest centroid (ties keep the lower index).
std::size_t nearest_word(const Vocabulary& vocab, const Eigen::VectorXd& d);

struct BowHistogram {
  Eigen::VectorXd weights;  // L2-normalized word counts
  bool empty = false;       // all-zero histogram of an empty scan
};

/// Word-count histogram of a feature set, L2-normalized.
BowHistogram histogram(const extract::FeatureSet& features,
                       const Vocabulary& vocab);

/// All pairs (i, j), j - i >= min_index_gap, with Euclidean histogram
/// distance below the threshold; i < j, ordered lexicographically.
std::vector<std::pair<std::size_t, std::size_t>> propose_loops(
    const std::vector<BowHistogram>& histograms, double distance_threshold,
    std::size_t min_index_gap);

}  // namespace scanfeat::mapping
