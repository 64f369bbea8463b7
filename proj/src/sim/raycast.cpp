#include "scanfeat/sim/raycast.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scanfeat/core/rng.hpp"

namespace scanfeat::sim {

ScannerSpec ScannerSpec::preset(const std::string& name) {
  ScannerSpec s;
  if (name == "os1-64") {
    s.beams = 64;
    s.azimuth_steps = 1024;
    s.elev_min = -16.6 * std::numbers::pi / 180.0;
    s.elev_max = 16.6 * std::numbers::pi / 180.0;
  } else if (name == "os0-128") {
    s.beams = 128;
    s.azimuth_steps = 1024;
    s.elev_min = -45.0 * std::numbers::pi / 180.0;
    s.elev_max = 45.0 * std::numbers::pi / 180.0;
  } else {
    throw Error("unknown scanner preset: " + name);
  }
  return s;
}

OrderedPointCloud raycast(const Scene& scene, const Pose& pose,
                          const ScannerSpec& spec, std::uint64_t seed) {
  const SphericalModel model = spec.spherical_model();
  OrderedPointCloud cloud(spec.beams, spec.azimuth_steps);
  const Eigen::Vector3d origin = pose.transform.translation;
  for (int r = 0; r < spec.beams; ++r) {
    const std::uint64_t row_seed = Rng::mix(seed, static_cast<std::uint64_t>(r));
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      Rng cell_rng(Rng::mix(row_seed, static_cast<std::uint64_t>(c)));
      const bool dropped =
          spec.dropout_rate > 0.0 && cell_rng.uniform() < spec.dropout_rate;
      const Eigen::Vector3d dir_local = model.direction(r, c);
      const Eigen::Vector3d dir_world = pose.transform.rotation * dir_local;
      RayHit hit;
      if (!intersect(scene, origin, dir_world, spec.max_range, &hit)) continue;
      double range = hit.distance;
      if (spec.range_noise_sigma > 0.0) {
        range += spec.range_noise_sigma * cell_rng.normal();
      }
      if (dropped || range <= 1e-6) continue;
      const std::size_t i = cloud.idx(r, c);
      cloud.points[i] = range * dir_local;
      cloud.intensities[i] =
          spec.intensity_falloff == 0.0
              ? hit.reflectivity
              : hit.reflectivity *
                    std::pow(1.0 / hit.distance, spec.intensity_falloff);
      cloud.valid[i] = 1;
    }
  }
  return cloud;
}

std::vector<Pose> interpolate_waypoints(const std::vector<Pose>& waypoints,
                                        int steps) {
  if (waypoints.size() < 2) throw Error("need at least 2 waypoints");
  if (steps < 2) throw Error("need at least 2 steps");
  std::vector<Pose> out;
  out.reserve(steps);
  const int segments = static_cast<int>(waypoints.size()) - 1;
  for (int i = 0; i < steps; ++i) {
    const double s = static_cast<double>(i) / (steps - 1) * segments;
    int seg = std::min(static_cast<int>(s), segments - 1);
    const double a = s - seg;
    const Pose& p0 = waypoints[seg];
    const Pose& p1 = waypoints[seg + 1];
    Pose p;
    p.timestamp = static_cast<double>(i);
    p.transform.translation = (1.0 - a) * p0.transform.translation +
                              a * p1.transform.translation;
    const Eigen::Quaterniond q0(p0.transform.rotation);
    const Eigen::Quaterniond q1(p1.transform.rotation);
    p.transform.rotation = q0.slerp(a, q1).toRotationMatrix();
    out.push_back(p);
  }
  return out;
}

std::vector<TrajectorySample> generate_trajectory(
    const Scene& scene, const ScannerSpec& spec,
    const std::vector<Pose>& waypoints, int steps, std::uint64_t seed) {
  const std::vector<Pose> poses = interpolate_waypoints(waypoints, steps);
  std::vector<TrajectorySample> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    TrajectorySample sample;
    sample.pose = poses[i];
    sample.cloud = raycast(scene, poses[i], spec, Rng::mix(seed, i));
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace scanfeat::sim
