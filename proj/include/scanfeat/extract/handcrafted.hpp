#pragma once

#include "scanfeat/featnet/network.hpp"

namespace scanfeat::extract {

/// Classical fallback producing the same dense-map interface as the network:
/// a Harris-style corner response over the range and intensity gradients for
/// both score maps, and mean-centered 4x4 patch samples of both channels as a
/// 32-dimensional unit descriptor. Useful as a pipeline stub when no trained
/// weights are at hand.
struct HandcraftedConfig {
  double harris_k = 0.06;
  int descriptor_step = 2;  // patch sample spacing in pixels
};

featnet::DenseFeatureMap handcrafted_maps(
    const ScanImage& image, const HandcraftedConfig& config = {});

}  // namespace scanfeat::extract
