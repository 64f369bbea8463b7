#pragma once

#include <string>

#include "scanfeat/featnet/network.hpp"
#include "scanfeat/featnet/preprocess.hpp"

namespace scanfeat::featnet {

/// Weights container, little-endian: magic "W3DL", u32 version, then the
/// config block (input channels, descriptor dim, activation, trunk layer
/// specs, per-channel normalization stats) followed by f32 tensors in
/// declaration order (trunk weights and biases, then descriptor /
/// reliability / repeatability heads). The stats travel with the weights so
/// inference normalizes inputs the same way training did.
struct WeightsFile {
  NetworkConfig config;
  NetworkWeights weights;
  ChannelStats stats;
};

WeightsFile load_weights(const std::string& path);
void save_weights(const std::string& path, const NetworkConfig& config,
                  const NetworkWeights& weights,
                  const ChannelStats& stats = {});

}  // namespace scanfeat::featnet
