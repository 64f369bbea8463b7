#pragma once

#include <Eigen/Core>

#include <vector>

#include "scanfeat/core/geometry.hpp"
#include "scanfeat/projection/scan_image.hpp"

namespace scanfeat {

struct InvalidPixel : Error {
  explicit InvalidPixel(const std::string& msg) : Error(msg) {}
};

/// Range image from an ordered cloud: range[i,j] = |points[i,j]|, intensity
/// and mask copied through.
ScanImage to_scan_image(const OrderedPointCloud& cloud);

struct ProjectionReport {
  std::size_t dropped_out_of_band = 0;
  std::size_t collisions = 0;  // pixels hit by more than one point
};

/// Projects an unordered point set through the spherical model. When several
/// points land on one pixel the nearest range wins; ties keep the lower
/// original index. Points outside the elevation band are dropped and counted
/// in the report.
ScanImage project(const std::vector<Eigen::Vector3d>& points,
                  const std::vector<double>& intensities,
                  const SphericalModel& model, int height, int width,
                  ProjectionReport* report = nullptr);

/// 3D point for a valid pixel: range * (cos e cos a, cos e sin a, sin e).
/// Throws InvalidPixel when the mask is false at (row, col).
Eigen::Vector3d lift(const ScanImage& image, const SphericalModel& model,
                     int row, int col);

/// Lifts every valid pixel, producing the ordered cloud the image encodes.
OrderedPointCloud cloud_from_scan_image(const ScanImage& image,
                                        const SphericalModel& model);

}  // namespace scanfeat
