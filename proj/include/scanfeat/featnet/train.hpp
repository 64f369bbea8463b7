#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scanfeat/featnet/loss.hpp"
#include "scanfeat/featnet/preprocess.hpp"

namespace scanfeat::featnet {

struct TrainSchedule {
  int stage1_epochs = 3;   // synthetic pairs only, no offset/scale jitter
  int stage2_epochs = 20;  // all pairs, full augmentation
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 4;
  std::size_t max_steps = 0;  // 0 = no cap
  double divergence_factor = 10.0;
  AugmentConfig augment;
  LossConfig loss;
};

struct CurvePoint {
  std::size_t step = 0;
  double total = 0.0;
  double repeatability = 0.0;
  double peakiness = 0.0;
  double reliability = 0.0;
};

struct TrainResult {
  NetworkWeights weights;
  std::vector<CurvePoint> curve;
  bool diverged = false;     // loss exceeded divergence_factor x initial
  std::size_t steps = 0;
};

/// Momentum SGD over the twin-network loss. Single-threaded by contract;
/// deterministic under the seed. Zero total epochs returns the initial
/// weights unchanged.
TrainResult train(const NetworkConfig& config, NetworkWeights initial,
                  const std::vector<TrainSample>& synthetic,
                  const std::vector<TrainSample>& real,
                  const TrainSchedule& schedule, const TrainConfig& train_cfg,
                  std::uint64_t seed);

/// Loss curve CSV: "step,total,repeat,peaky,reliab".
void save_loss_curve(const std::string& path,
                     const std::vector<CurvePoint>& curve);

}  // namespace scanfeat::featnet
