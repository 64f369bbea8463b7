#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scanfeat/core/geometry.hpp"

namespace scanfeat::sim {

enum class Shape { kPlane, kBox, kCylinder, kSphere };

enum class TextureKind { kNone, kChecker, kGradient };

/// Reflectivity pattern over local surface coordinates.
struct Texture {
  TextureKind kind = TextureKind::kNone;
  double period = 1.0;     // meters
  double secondary = 0.9;  // checker: reflectivity of the alternate tile
};

/// One geometric primitive. Size semantics per shape:
///   plane:    size[0], size[1] = half extents in local x/y; 0 = infinite.
///   box:      half extents x/y/z.
///   cylinder: size[0] = radius, size[1] = half height (z axis), capped.
///   sphere:   size[0] = radius.
struct Primitive {
  Shape shape = Shape::kPlane;
  RigidTransform pose;
  Eigen::Vector3d size = Eigen::Vector3d::Zero();
  double reflectivity = 0.5;
  Texture texture;
};

struct Scene {
  std::vector<Primitive> primitives;
};

struct RayHit {
  double distance = 0.0;
  double reflectivity = 0.0;
};

/// Nearest intersection of the world-frame ray with the scene within
/// max_range. Returns false on a miss.
bool intersect(const Scene& scene, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir, double max_range, RayHit* hit);

Scene load_scene(const std::string& path);
void save_scene(const std::string& path, const Scene& scene);

}  // namespace scanfeat::sim
