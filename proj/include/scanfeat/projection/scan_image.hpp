#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "scanfeat/errors.hpp"

namespace scanfeat {

/// 2-channel raster of a full 360° sweep: per-pixel range (meters) and
/// intensity, plus a validity mask. Columns wrap around in azimuth.
struct ScanImage {
  int height = 0;
  int width = 0;
  std::vector<double> range;
  std::vector<double> intensity;
  std::vector<std::uint8_t> valid;

  ScanImage() = default;
  ScanImage(int h, int w)
      : height(h),
        width(w),
        range(static_cast<std::size_t>(h) * w, 0.0),
        intensity(static_cast<std::size_t>(h) * w, 0.0),
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

/// Spherical projection geometry of a spinning scanner. Rows follow a
/// per-beam elevation table (strictly decreasing top to bottom); columns are
/// uniform azimuth bins with the pixel center of column c at
/// c * azimuth_resolution - azimuth_offset.
struct SphericalModel {
  double azimuth_resolution = 0.0;  // radians per column
  double azimuth_offset = 0.0;      // radians
  std::vector<double> elevation_angles;

  /// Uniform beam table spanning [elev_max, elev_min] over `rows` rows.
  static SphericalModel uniform(int rows, int cols, double elev_min,
                                double elev_max, double azimuth_offset = 0.0);

  int rows() const { return static_cast<int>(elevation_angles.size()); }
  int cols() const {
    return static_cast<int>(
        std::llround(2.0 * std::numbers::pi / azimuth_resolution));
  }

  double azimuth(int col) const {
    return col * azimuth_resolution - azimuth_offset;
  }

  /// Real-valued column coordinate of an azimuth angle (unwrapped).
  double azimuth_to_col(double azimuth) const {
    return (azimuth + azimuth_offset) / azimuth_resolution;
  }

  /// Index of the beam whose elevation is nearest to `elevation`.
  int nearest_row(double elevation) const;

  /// Real-valued row coordinate by linear interpolation of the beam table,
  /// clamped to [0, rows-1]. Returns false when `elevation` lies outside the
  /// band (more than half a beam gap beyond the first or last beam).
  bool elevation_to_row(double elevation, double* row) const;

  /// Unit ray direction for the center of pixel (row, col).
  Eigen::Vector3d direction(int row, int col) const {
    const double e = elevation_angles[row];
    const double a = azimuth(col);
    return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
  }

  bool consistent_with(int h, int w, double tol = 1e-9) const {
    return rows() == h &&
           std::abs(azimuth_resolution * w - 2.0 * std::numbers::pi) <= tol;
  }
};

}  // namespace scanfeat
