#pragma once

#include <optional>
#include <vector>

#include "scanfeat/core/rng.hpp"
#include "scanfeat/featnet/network.hpp"
#include "scanfeat/pairgen/flow.hpp"
#include "scanfeat/projection/scan_image.hpp"

namespace scanfeat::featnet {

struct DegenerateStats : Error {
  explicit DegenerateStats(const std::string& msg) : Error(msg) {}
};

/// Per-channel moments over the valid pixels of a dataset.
struct ChannelStats {
  double mean_range = 0.0;
  double std_range = 1.0;
  double mean_intensity = 0.0;
  double std_intensity = 1.0;
};

ChannelStats compute_stats(const std::vector<ScanImage>& images);

/// x -> (x - mean) / std per channel on valid pixels; invalid pixels are 0.
/// Throws DegenerateStats when a standard deviation is below 1e-12.
ScanImage normalize(const ScanImage& image, const ChannelStats& stats);

/// One cropped, normalized training pair with its flow in the crop frames.
struct TrainSample {
  ScanImage image_a;
  ScanImage image_b;
  FlowMap flow;
};

struct AugmentConfig {
  double noise_variance = 0.04;
  double offset_range = 0.1;  // per-channel additive, uniform [-r, r]
  double scale_range = 0.1;   // per-channel factor 1 + U(-s, s)
  bool enable_offset_scale = true;
};

/// value' = (1 + gamma) * value + offset + noise, valid pixels only.
/// Flow is untouched. Draw order is fixed (offsets, scales, then per-pixel
/// noise row-major, channel-minor) so runs reproduce bit-identically.
TrainSample augment(const TrainSample& sample, const AugmentConfig& config,
                    Rng& rng);

struct CropConfig {
  int height = 64;
  int width = 180;
  std::size_t min_valid_flow = 128;
  int max_tries = 16;
};

/// Random crop of an image pair guided by the flow: the first crop is drawn
/// uniformly (columns wrap), the second centers on the mean flow target, and
/// flow entries leaving the second crop are invalidated. Returns nothing when
/// no try reaches min_valid_flow.
std::optional<TrainSample> crop_sample(const ScanImage& a, const ScanImage& b,
                                       const FlowMap& flow,
                                       const CropConfig& config, Rng& rng);

}  // namespace scanfeat::featnet
