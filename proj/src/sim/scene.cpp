#include "scanfeat/sim/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace scanfeat::sim {

namespace {

double checker_value(const Texture& t, double base, double u, double v) {
  const long long iu = static_cast<long long>(std::floor(u / t.period));
  const long long iv = static_cast<long long>(std::floor(v / t.period));
  return ((iu + iv) & 1) == 0 ? base : t.secondary;
}

double textured_reflectivity(const Primitive& p, double u, double v) {
  switch (p.texture.kind) {
    case TextureKind::kNone:
      return p.reflectivity;
    case TextureKind::kChecker:
      return checker_value(p.texture, p.reflectivity, u, v);
    case TextureKind::kGradient: {
      const double s =
          0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u / p.texture.period);
      return p.reflectivity * s;
    }
  }
  return p.reflectivity;
}

constexpr double kRayEps = 1e-9;

// All intersections run in the primitive's local frame; (u, v) are local
// surface coordinates used for texturing.
bool intersect_plane(const Primitive& p, const Eigen::Vector3d& o,
                     const Eigen::Vector3d& d, double* t, double* u,
                     double* v) {
  if (std::abs(d.z()) < 1e-15) return false;
  const double tt = -o.z() / d.z();
  if (tt <= kRayEps) return false;
  const double x = o.x() + tt * d.x();
  const double y = o.y() + tt * d.y();
  if (p.size.x() > 0.0 && std::abs(x) > p.size.x()) return false;
  if (p.size.y() > 0.0 && std::abs(y) > p.size.y()) return false;
  *t = tt;
  *u = x;
  *v = y;
  return true;
}

bool intersect_box(const Primitive& p, const Eigen::Vector3d& o,
                   const Eigen::Vector3d& d, double* t, double* u, double* v) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    const double h = p.size[i];
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > h) return false;
      continue;
    }
    double t0 = (-h - o[i]) / d[i];
    double t1 = (h - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis = i;
    }
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  if (axis < 0 || tmin <= kRayEps || tmin > tmax) return false;
  const Eigen::Vector3d hit = o + tmin * d;
  *t = tmin;
  // texture over the two in-face axes
  const int a = (axis + 1) % 3;
  const int b = (axis + 2) % 3;
  *u = hit[a];
  *v = hit[b];
  return true;
}

bool intersect_sphere(const Primitive& p, const Eigen::Vector3d& o,
                      const Eigen::Vector3d& d, double* t, double* u,
                      double* v) {
  const double r = p.size.x();
  const double b = o.dot(d);
  const double c = o.squaredNorm() - r * r;
  const double disc = b * b - c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double tt = -b - sq;
  if (tt <= kRayEps) tt = -b + sq;
  if (tt <= kRayEps) return false;
  const Eigen::Vector3d hit = o + tt * d;
  *t = tt;
  *u = std::atan2(hit.y(), hit.x()) * r;
  *v = std::asin(std::clamp(hit.z() / r, -1.0, 1.0)) * r;
  return true;
}

bool intersect_cylinder(const Primitive& p, const Eigen::Vector3d& o,
                        const Eigen::Vector3d& d, double* t, double* u,
                        double* v) {
  const double r = p.size.x();
  const double hz = p.size.y();
  double best = std::numeric_limits<double>::infinity();
  double bu = 0.0, bv = 0.0;
  // side wall
  const double a2 = d.x() * d.x() + d.y() * d.y();
  if (a2 > 1e-15) {
    const double b = (o.x() * d.x() + o.y() * d.y()) / a2;
    const double c = (o.x() * o.x() + o.y() * o.y() - r * r) / a2;
    const double disc = b * b - c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double tt : {-b - sq, -b + sq}) {
        if (tt <= kRayEps || tt >= best) continue;
        const Eigen::Vector3d hit = o + tt * d;
        if (std::abs(hit.z()) > hz) continue;
        best = tt;
        bu = std::atan2(hit.y(), hit.x()) * r;
        bv = hit.z();
        break;
      }
    }
  }
  // caps
  if (std::abs(d.z()) > 1e-15) {
    for (double zcap : {hz, -hz}) {
      const double tt = (zcap - o.z()) / d.z();
      if (tt <= kRayEps || tt >= best) continue;
      const Eigen::Vector3d hit = o + tt * d;
      if (hit.x() * hit.x() + hit.y() * hit.y() > r * r) continue;
      best = tt;
      bu = hit.x();
      bv = hit.y();
    }
  }
  if (!std::isfinite(best)) return false;
  *t = best;
  *u = bu;
  *v = bv;
  return true;
}

}  // namespace

bool intersect(const Scene& scene, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir, double max_range, RayHit* hit) {
  double best = max_range;
  bool found = false;
  double refl = 0.0;
  for (const Primitive& p : scene.primitives) {
    const RigidTransform inv = p.pose.inverse();
    const Eigen::Vector3d o = inv.apply(origin);
    const Eigen::Vector3d d = inv.rotation * dir;
    double t, u, v;
    bool ok = false;
    switch (p.shape) {
      case Shape::kPlane:
        ok = intersect_plane(p, o, d, &t, &u, &v);
        break;
      case Shape::kBox:
        ok = intersect_box(p, o, d, &t, &u, &v);
        break;
      case Shape::kSphere:
        ok = intersect_sphere(p, o, d, &t, &u, &v);
        break;
      case Shape::kCylinder:
        ok = intersect_cylinder(p, o, d, &t, &u, &v);
        break;
    }
    if (ok && t <= best) {
      best = t;
      found = true;
      refl = textured_reflectivity(p, u, v);
    }
  }
  if (found && hit) {
    hit->distance = best;
    hit->reflectivity = refl;
  }
  return found;
}

namespace {

using nlohmann::json;

Eigen::Vector3d vec3(const json& j, const char* key,
                     const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw IoError(std::string("scene field '") + key + "' must be [x,y,z]");
  }
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

RigidTransform pose_from_json(const json& j) {
  RigidTransform t;
  t.translation = vec3(j, "position", Eigen::Vector3d::Zero());
  const Eigen::Vector3d rpy = vec3(j, "rpy", Eigen::Vector3d::Zero());
  t.rotation = (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
                   .toRotationMatrix();
  return t;
}

Shape shape_from_name(const std::string& name) {
  if (name == "plane") return Shape::kPlane;
  if (name == "box") return Shape::kBox;
  if (name == "cylinder") return Shape::kCylinder;
  if (name == "sphere") return Shape::kSphere;
  throw IoError("unknown primitive shape: " + name);
}

const char* shape_name(Shape s) {
  switch (s) {
    case Shape::kPlane: return "plane";
    case Shape::kBox: return "box";
    case Shape::kCylinder: return "cylinder";
    case Shape::kSphere: return "sphere";
  }
  return "plane";
}

}  // namespace

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("scene parse error in " + path + ": " + e.what());
  }
  Scene scene;
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    p.shape = shape_from_name(pj.at("shape").get<std::string>());
    p.pose = pose_from_json(pj);
    p.size = vec3(pj, "size", Eigen::Vector3d::Zero());
    p.reflectivity = pj.value("reflectivity", 0.5);
    if (p.reflectivity < 0.0 || p.reflectivity > 1.0) {
      throw IoError("reflectivity outside [0,1] in " + path);
    }
    if (pj.contains("texture")) {
      const auto& tj = pj.at("texture");
      const std::string kind = tj.value("kind", "none");
      if (kind == "checker") p.texture.kind = TextureKind::kChecker;
      else if (kind == "gradient") p.texture.kind = TextureKind::kGradient;
      else if (kind != "none") throw IoError("unknown texture kind: " + kind);
      p.texture.period = tj.value("period", 1.0);
      p.texture.secondary = tj.value("secondary", 0.9);
      if (p.texture.period <= 0.0) throw IoError("texture period must be > 0");
    }
    const bool positive = [&] {
      switch (p.shape) {
        case Shape::kPlane: return p.size.x() >= 0.0 && p.size.y() >= 0.0;
        case Shape::kBox:
          return p.size.x() > 0.0 && p.size.y() > 0.0 && p.size.z() > 0.0;
        case Shape::kCylinder: return p.size.x() > 0.0 && p.size.y() > 0.0;
        case Shape::kSphere: return p.size.x() > 0.0;
      }
      return false;
    }();
    if (!positive) throw IoError("non-positive primitive extent in " + path);
    scene.primitives.push_back(p);
  }
  return scene;
}

void save_scene(const std::string& path, const Scene& scene) {
  json j;
  j["primitives"] = json::array();
  for (const Primitive& p : scene.primitives) {
    json pj;
    pj["shape"] = shape_name(p.shape);
    pj["position"] = {p.pose.translation.x(), p.pose.translation.y(),
                      p.pose.translation.z()};
    const Eigen::Vector3d rpy = p.pose.rotation.eulerAngles(2, 1, 0).reverse();
    pj["rpy"] = {rpy.x(), rpy.y(), rpy.z()};
    pj["size"] = {p.size.x(), p.size.y(), p.size.z()};
    pj["reflectivity"] = p.reflectivity;
    if (p.texture.kind != TextureKind::kNone) {
      pj["texture"] = {
          {"kind", p.texture.kind == TextureKind::kChecker ? "checker"
                                                           : "gradient"},
          {"period", p.texture.period},
          {"secondary", p.texture.secondary}};
    }
    j["primitives"].push_back(pj);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scene file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace scanfeat::sim
