#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scanfeat/projection/scan_image.hpp"

namespace scanfeat {

/// Binary scan container, little-endian:
///   magic "SCNI", u32 version, u32 H, u32 W,
///   H*W f32 channel 1 (row-major), H*W f32 channel 2, H*W u8 validity,
///   optional trailing f32 elevation table of length H.
/// For scan images the channels are range and intensity. Flow maps reuse the
/// container with channels (u', v').
struct ScanFile {
  ScanImage image;
  std::optional<std::vector<double>> elevation_angles;
};

ScanFile load_scan(const std::string& path);
void save_scan(const std::string& path, const ScanImage& image,
               const std::vector<double>* elevation_angles = nullptr);

}  // namespace scanfeat
