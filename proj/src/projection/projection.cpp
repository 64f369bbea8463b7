#include "scanfeat/projection/projection.hpp"

#include <algorithm>
#include <cmath>

namespace scanfeat {

SphericalModel SphericalModel::uniform(int rows, int cols, double elev_min,
                                       double elev_max,
                                       double azimuth_offset) {
  SphericalModel m;
  m.azimuth_resolution = 2.0 * std::numbers::pi / cols;
  m.azimuth_offset = azimuth_offset;
  m.elevation_angles.resize(rows);
  if (rows == 1) {
    m.elevation_angles[0] = 0.5 * (elev_min + elev_max);
  } else {
    for (int r = 0; r < rows; ++r) {
      // top row carries the largest elevation
      m.elevation_angles[r] =
          elev_max + (elev_min - elev_max) * r / (rows - 1);
    }
  }
  return m;
}

int SphericalModel::nearest_row(double elevation) const {
  // table is strictly decreasing; binary search for the bracketing pair
  const auto& e = elevation_angles;
  const int n = rows();
  if (n == 1) return 0;
  auto it = std::lower_bound(e.begin(), e.end(), elevation,
                             [](double a, double b) { return a > b; });
  if (it == e.begin()) return 0;
  if (it == e.end()) return n - 1;
  const int hi = static_cast<int>(it - e.begin());
  const int lo = hi - 1;
  return (e[lo] - elevation <= elevation - e[hi]) ? lo : hi;
}

bool SphericalModel::elevation_to_row(double elevation, double* row) const {
  const auto& e = elevation_angles;
  const int n = rows();
  if (n == 1) {
    *row = 0.0;
    return std::abs(elevation - e[0]) <= 1e-12;
  }
  const double top_gap = e[0] - e[1];
  const double bot_gap = e[n - 2] - e[n - 1];
  if (elevation > e[0] + 0.5 * top_gap) return false;
  if (elevation < e[n - 1] - 0.5 * bot_gap) return false;
  if (elevation >= e[0]) {
    *row = (e[0] - elevation) / top_gap;  // extrapolates above the first beam
    return true;
  }
  if (elevation <= e[n - 1]) {
    *row = (n - 1) + (e[n - 1] - elevation) / bot_gap;
    return true;
  }
  auto it = std::lower_bound(e.begin(), e.end(), elevation,
                             [](double a, double b) { return a > b; });
  const int hi = static_cast<int>(it - e.begin());
  const int lo = hi - 1;
  *row = lo + (e[lo] - elevation) / (e[lo] - e[hi]);
  return true;
}

ScanImage to_scan_image(const OrderedPointCloud& cloud) {
  ScanImage img(cloud.height, cloud.width);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.valid[i]) continue;
    img.range[i] = cloud.points[i].norm();
    img.intensity[i] = cloud.intensities[i];
    img.valid[i] = 1;
  }
  return img;
}

namespace {

int wrap_col(long long col, int width) {
  long long c = col % width;
  if (c < 0) c += width;
  return static_cast<int>(c);
}

}  // namespace

ScanImage project(const std::vector<Eigen::Vector3d>& points,
                  const std::vector<double>& intensities,
                  const SphericalModel& model, int height, int width,
                  ProjectionReport* report) {
  if (!model.consistent_with(height, width)) {
    throw Error("spherical model inconsistent with image dimensions");
  }
  ScanImage img(height, width);
  std::vector<std::size_t> source(img.range.size(), 0);
  ProjectionReport rep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3d& p = points[i];
    const double r = p.norm();
    if (!(r > 0.0) || !p.allFinite()) {
      ++rep.dropped_out_of_band;
      continue;
    }
    const double elevation = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
    double row_f;
    if (!model.elevation_to_row(elevation, &row_f)) {
      ++rep.dropped_out_of_band;
      continue;
    }
    const int row = model.nearest_row(elevation);
    const double azimuth = std::atan2(p.y(), p.x());
    const int col = wrap_col(
        static_cast<long long>(std::floor(model.azimuth_to_col(azimuth) + 0.5)),
        width);
    const std::size_t at = img.idx(row, col);
    const double intensity = intensities.empty() ? 0.0 : intensities[i];
    if (!img.valid[at]) {
      img.range[at] = r;
      img.intensity[at] = intensity;
      img.valid[at] = 1;
      source[at] = i;
    } else {
      ++rep.collisions;
      // nearest wins; equal ranges keep the lower original index
      if (r < img.range[at] || (r == img.range[at] && i < source[at])) {
        img.range[at] = r;
        img.intensity[at] = intensity;
        source[at] = i;
      }
    }
  }
  if (report) *report = rep;
  return img;
}

Eigen::Vector3d lift(const ScanImage& image, const SphericalModel& model,
                     int row, int col) {
  if (row < 0 || row >= image.height || col < 0 || col >= image.width ||
      !image.is_valid(row, col)) {
    throw InvalidPixel("lift at invalid pixel (" + std::to_string(row) + "," +
                       std::to_string(col) + ")");
  }
  return image.range[image.idx(row, col)] * model.direction(row, col);
}

OrderedPointCloud cloud_from_scan_image(const ScanImage& image,
                                        const SphericalModel& model) {
  OrderedPointCloud cloud(image.height, image.width);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      const std::size_t i = image.idx(r, c);
      if (!image.valid[i]) continue;
      cloud.points[i] = image.range[i] * model.direction(r, c);
      cloud.intensities[i] = image.intensity[i];
      cloud.valid[i] = 1;
    }
  }
  return cloud;
}

}  // namespace scanfeat
