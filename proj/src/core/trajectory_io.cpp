#include "scanfeat/core/trajectory_io.hpp"

#include <Eigen/Geometry>

#include <fstream>
#include <sstream>

namespace scanfeat {

std::vector<Pose> load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);
  std::vector<Pose> poses;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw IoError("malformed pose at " + path + ":" + std::to_string(lineno));
    }
    Pose p;
    p.timestamp = ts;
    p.transform.translation = {tx, ty, tz};
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-12) {
      throw IoError("zero quaternion at " + path + ":" + std::to_string(lineno));
    }
    p.transform.rotation = q.normalized().toRotationMatrix();
    p.transform = orthonormalized(p.transform);
    poses.push_back(p);
  }
  return poses;
}

void save_trajectory(const std::string& path, const std::vector<Pose>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  out.precision(17);
  for (const Pose& p : poses) {
    Eigen::Quaterniond q(p.transform.rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // canonical sign
    out << p.timestamp << ' ' << p.transform.translation.x() << ' '
        << p.transform.translation.y() << ' ' << p.transform.translation.z()
        << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w()
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scanfeat
