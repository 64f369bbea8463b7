#pragma once

#include <cstddef>
#include <vector>

namespace scanfeat::featnet {

/// Dense C x H x W tensor, row-major within each channel plane. Double
/// precision keeps finite-difference gradient checks meaningful.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c),
        height(h),
        width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  double& at(int c, int r, int col) {
    return data[c * plane() + static_cast<std::size_t>(r) * width + col];
  }
  double at(int c, int r, int col) const {
    return data[c * plane() + static_cast<std::size_t>(r) * width + col];
  }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

}  // namespace scanfeat::featnet
