#include "scanfeat/mapping/vocabulary.hpp"

#include <cmath>
#include <limits>

#include "scanfeat/core/rng.hpp"

namespace scanfeat::mapping {

Vocabulary build_vocabulary(const std::vector<Eigen::VectorXd>& descriptors,
                            std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("vocabulary needs k >= 2");
  if (descriptors.size() < k) {
    throw TooFewDescriptors("need at least k descriptors");
  }
  const std::size_t n = descriptors.size();
  Rng rng(seed);

  // k-means++ seeding
  Vocabulary vocab;
  vocab.centroids.push_back(descriptors[rng.index(n)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (vocab.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (descriptors[i] - vocab.centroids.back()).squaredNorm();
      d2[i] = std::min(d2[i], d);
      total += d2[i];
    }
    if (total <= 0.0) {
      throw TooFewDescriptors("fewer than k distinct descriptors");
    }
    double target = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    vocab.centroids.push_back(descriptors[pick]);
  }

  // Lloyd iterations to an assignment fixpoint
  std::vector<std::size_t> assign(n, 0);
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t w = nearest_word(vocab, descriptors[i]);
      if (w != assign[i]) {
        assign[i] = w;
        changed = true;
      }
    }
    if (!changed && round > 0) break;
    std::vector<Eigen::VectorXd> sums(
        k, Eigen::VectorXd::Zero(descriptors[0].size()));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assign[i]] += descriptors[i];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        vocab.centroids[c] = sums[c] / static_cast<double>(counts[c]);
      }
      // empty clusters keep their previous centroid
    }
    if (!changed) break;
  }
  return vocab;
}

std::size_t nearest_word(const Vocabulary& vocab, const Eigen::VectorXd& d) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < vocab.centroids.size(); ++c) {
    const double dist = (vocab.centroids[c] - d).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

BowHistogram histogram(const extract::FeatureSet& features,
                       const Vocabulary& vocab) {
  BowHistogram out;
  out.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
  if (features.size() == 0) {
    out.empty = true;
    return out;
  }
  if (features.dim() != vocab.dim()) {
    throw Error("histogram: descriptor dimension disagrees with vocabulary");
  }
  for (const Eigen::VectorXd& d : features.descriptors) {
    out.weights[static_cast<Eigen::Index>(nearest_word(vocab, d))] += 1.0;
  }
  out.weights /= out.weights.norm();
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> propose_loops(
    const std::vector<BowHistogram>& histograms, double distance_threshold,
    std::size_t min_index_gap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < histograms.size(); ++i) {
    for (std::size_t j = i + min_index_gap; j < histograms.size(); ++j) {
      if (histograms[i].empty || histograms[j].empty) continue;
      const double d = (histograms[i].weights - histograms[j].weights).norm();
      if (d < distance_threshold) out.push_back({i, j});
    }
  }
  return out;
}

}  // namespace scanfeat::mapping
