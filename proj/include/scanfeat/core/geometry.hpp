#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

#include "scanfeat/errors.hpp"

namespace scanfeat {

/// Rigid body transform: rotation (orthonormal, det +1) plus translation in
/// meters. Rotations are stored as 3x3 matrices; quaternions appear only at
/// file I/O boundaries.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_matrix(const Eigen::Matrix4d& m) {
    RigidTransform t;
    t.rotation = m.block<3, 3>(0, 0);
    t.translation = m.block<3, 1>(0, 3);
    return t;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = rotation;
    m.block<3, 1>(0, 3) = translation;
    return m;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform inverse() const {
    RigidTransform t;
    t.rotation = rotation.transpose();
    t.translation = -(t.rotation * translation);
    return t;
  }

  /// Checks orthonormality and det +1 within tol.
  bool is_valid(double tol = 1e-9) const;
};

/// Applies b then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Re-projects the rotation onto SO(3) (nearest orthonormal matrix). Used
/// after parsing text formats so accumulated rounding never violates the
/// transform invariants.
RigidTransform orthonormalized(const RigidTransform& t);

/// Angle of a rotation matrix in radians, in [0, pi].
double rotation_angle(const Eigen::Matrix3d& r);

Eigen::Matrix3d rotation_about_z(double angle);
Eigen::Matrix3d rotation_axis_angle(const Eigen::Vector3d& axis, double angle);

/// Scanner pose: scanner-to-world transform plus a timestamp in seconds.
struct Pose {
  RigidTransform transform;
  double timestamp = 0.0;
};

/// Poses are scanner-to-world; the result maps points expressed in `from`'s
/// scanner frame into `to`'s scanner frame: inverse(to) ∘ from.
RigidTransform relative_transform(const Pose& from, const Pose& to);

/// Grid-ordered LiDAR scan: H x W of 3D points (meters, sensor frame) with
/// per-cell intensity and validity. Invalid cells hold the canonical zero
/// point; readers must consult the mask.
struct OrderedPointCloud {
  int height = 0;
  int width = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> intensities;
  std::vector<std::uint8_t> valid;

  OrderedPointCloud() = default;
  OrderedPointCloud(int h, int w)
      : height(h),
        width(w),
        points(static_cast<std::size_t>(h) * w, Eigen::Vector3d::Zero()),
        intensities(static_cast<std::size_t>(h) * w, 0.0),
        valid(static_cast<std::size_t>(h) * w, 0) {}

  std::size_t idx(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
  bool is_valid(int row, int col) const { return valid[idx(row, col)] != 0; }
  const Eigen::Vector3d& point(int row, int col) const {
    return points[idx(row, col)];
  }

  std::size_t valid_count() const;
};

/// Rigidly moves every valid point; intensities and mask are untouched.
OrderedPointCloud transform_cloud(const OrderedPointCloud& cloud,
                                  const RigidTransform& t);

}  // namespace scanfeat
