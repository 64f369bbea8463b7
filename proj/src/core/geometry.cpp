#include "scanfeat/core/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace scanfeat {

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d err =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform orthonormalized(const RigidTransform& t) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      t.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return {r, t.translation};
}

double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

Eigen::Matrix3d rotation_about_z(double angle) {
  return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

Eigen::Matrix3d rotation_axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

RigidTransform relative_transform(const Pose& from, const Pose& to) {
  return compose(to.transform.inverse(), from.transform);
}

std::size_t OrderedPointCloud::valid_count() const {
  std::size_t n = 0;
  for (std::uint8_t v : valid) n += (v != 0);
  return n;
}

OrderedPointCloud transform_cloud(const OrderedPointCloud& cloud,
                                  const RigidTransform& t) {
  OrderedPointCloud out = cloud;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (out.valid[i]) out.points[i] = t.apply(cloud.points[i]);
  }
  return out;
}

}  // namespace scanfeat
