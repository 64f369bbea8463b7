#pragma once

#include <cstdint>

#include "scanfeat/core/rng.hpp"
#include "scanfeat/pairgen/flow.hpp"
#include "scanfeat/projection/scan_image.hpp"

namespace scanfeat::pairgen {

/// Parameters of one synthetic scan-image warp. The second image is
/// tilt(shift(scale(I))): scaling resamples both channels and divides range
/// by s, the u shift rotates columns modulo W, the v shift exposes rows, and
/// tilt is a small vertical shear that leaves range values untouched.
struct SyntheticTransformParams {
  double scale = 1.0;  // >= 1
  int u_shift = 0;     // pixels, wrapped
  int v_shift = 0;     // pixels, bounded by image height
  double tilt = 0.0;   // max row offset magnitude in pixels
};

/// Sampling ranges for random params.
struct SyntheticParamRanges {
  double scale_min = 1.0;
  double scale_max = 1.25;
  int max_u_shift = 50;
  int max_v_shift = 0;
  double max_tilt = 20.0;
};

SyntheticTransformParams sample_params(const SyntheticParamRanges& ranges,
                                       Rng& rng);

struct SyntheticPair {
  ScanImage image;
  FlowMap flow;
};

/// Generates the warped image and the exact composed pixel map. Flow entries
/// are invalid where the source pixel is invalid, the target leaves the image
/// vertically, the source column scales out of the panorama, or the target
/// lands on an invalid pixel of the warped image.
SyntheticPair synth_pair(const ScanImage& image,
                         const SyntheticTransformParams& params);

}  // namespace scanfeat::pairgen
