#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace scanfeat {

/// Hashed voxel grid over a fixed point set for near-neighbor queries.
/// Queries are exact for radii up to the cell size.
class GridIndex {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  GridIndex(const std::vector<Eigen::Vector3d>& points, double cell_size);

  /// Index and distance of the nearest stored point within `radius` of q,
  /// or {npos, inf} if none. radius must be <= cell size.
  std::pair<std::size_t, double> nearest_within(const Eigen::Vector3d& q,
                                                double radius) const;

  bool has_neighbor_within(const Eigen::Vector3d& q, double radius) const {
    return nearest_within(q, radius).first != npos;
  }

 private:
  std::int64_t key(const Eigen::Vector3d& p) const;

  const std::vector<Eigen::Vector3d>& points_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace scanfeat
