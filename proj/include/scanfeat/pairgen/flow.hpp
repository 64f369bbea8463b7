#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scanfeat/errors.hpp"

namespace scanfeat {

/// Per-pixel ground-truth correspondence from one scan image into another.
/// Targets are real-valued (sub-pixel); consumers round or interpolate
/// explicitly. Invalid entries are excluded from every loss and metric.
struct FlowMap {
  int height = 0;
  int width = 0;
  std::vector<double> target_u;  // column coordinate in the second image
  std::vector<double> target_v;  // row coordinate
  std::vector<std::uint8_t> valid;

  FlowMap() = default;
  FlowMap(int h, int w)
      : height(h),
        width(w),
        target_u(static_cast<std::size_t>(h) * w, 0.0),
        target_v(static_cast<std::size_t>(h) * w, 0.0),
        valid(static_cast<std::size_t>(h) * w, 0) {}

  std::size_t idx(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
  bool is_valid(int row, int col) const { return valid[idx(row, col)] != 0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (std::uint8_t v : valid) n += (v != 0);
    return n;
  }
};

/// Flow files reuse the scan container with channels (u', v').
FlowMap load_flow(const std::string& path);
void save_flow(const std::string& path, const FlowMap& flow);

}  // namespace scanfeat
