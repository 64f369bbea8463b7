#include "scanfeat/core/grid_index.hpp"

#include <cmath>

namespace scanfeat {

namespace {

std::int64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
  // 21 bits per axis, offset to keep coordinates nonnegative
  constexpr std::int64_t kOffset = 1 << 20;
  constexpr std::int64_t kMask = (1 << 21) - 1;
  return ((x + kOffset) & kMask) | (((y + kOffset) & kMask) << 21) |
         (((z + kOffset) & kMask) << 42);
}

}  // namespace

GridIndex::GridIndex(const std::vector<Eigen::Vector3d>& points,
                     double cell_size)
    : points_(points), cell_(cell_size) {
  cells_.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    cells_[key(points[i])].push_back(static_cast<std::uint32_t>(i));
  }
}

std::int64_t GridIndex::key(const Eigen::Vector3d& p) const {
  return pack(static_cast<std::int64_t>(std::floor(p.x() / cell_)),
              static_cast<std::int64_t>(std::floor(p.y() / cell_)),
              static_cast<std::int64_t>(std::floor(p.z() / cell_)));
}

std::pair<std::size_t, double> GridIndex::nearest_within(
    const Eigen::Vector3d& q, double radius) const {
  const std::int64_t cx = static_cast<std::int64_t>(std::floor(q.x() / cell_));
  const std::int64_t cy = static_cast<std::int64_t>(std::floor(q.y() / cell_));
  const std::int64_t cz = static_cast<std::int64_t>(std::floor(q.z() / cell_));
  std::size_t best = npos;
  double best_d2 = radius * radius;
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
        if (it == cells_.end()) continue;
        for (std::uint32_t i : it->second) {
          const double d2 = (points_[i] - q).squaredNorm();
          if (d2 < best_d2) {
            best = i;
            best_d2 = d2;
          } else if (best != npos && d2 == best_d2 && i < best) {
            best = i;
          }
        }
      }
    }
  }
  if (best == npos) {
    return {npos, std::numeric_limits<double>::infinity()};
  }
  return {best, std::sqrt(best_d2)};
}

}  // namespace scanfeat
