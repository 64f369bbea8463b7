#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/projection/scan_image.hpp"
#include "scanfeat/sim/scene.hpp"

namespace scanfeat::sim {

/// Beam layout and measurement model of a simulated spinning scanner.
struct ScannerSpec {
  int beams = 64;
  int azimuth_steps = 1024;
  double elev_min = -0.2897;  // radians
  double elev_max = 0.2897;
  double max_range = 120.0;
  double range_noise_sigma = 0.0;
  double intensity_falloff = 0.0;  // intensity = reflectivity * (1/r)^falloff
  double dropout_rate = 0.0;

  /// "os1-64" (64x1024, +-16.6 deg) or "os0-128" (128x1024, +-45 deg).
  static ScannerSpec preset(const std::string& name);

  SphericalModel spherical_model() const {
    return SphericalModel::uniform(beams, azimuth_steps, elev_min, elev_max);
  }
};

/// Casts one ray per cell from `pose`. Points come back in the sensor frame;
/// misses and dropouts are invalid cells. Per-cell noise streams make the
/// result independent of traversal order.
OrderedPointCloud raycast(const Scene& scene, const Pose& pose,
                          const ScannerSpec& spec, std::uint64_t seed);

struct TrajectorySample {
  Pose pose;
  OrderedPointCloud cloud;
};

/// Interpolates `steps` poses along the waypoint polyline (linear in
/// translation, slerp in rotation, uniform in parameter) and raycasts each.
std::vector<TrajectorySample> generate_trajectory(
    const Scene& scene, const ScannerSpec& spec,
    const std::vector<Pose>& waypoints, int steps, std::uint64_t seed);

/// The interpolated poses alone (ground truth of generate_trajectory).
std::vector<Pose> interpolate_waypoints(const std::vector<Pose>& waypoints,
                                        int steps);

}  // namespace scanfeat::sim
