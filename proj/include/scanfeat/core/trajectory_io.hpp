#pragma once

#include <string>
#include <vector>

#include "scanfeat/core/geometry.hpp"

namespace scanfeat {

/// TUM trajectory format: one pose per line,
/// "timestamp tx ty tz qx qy qz qw", '#' starts a comment line.
std::vector<Pose> load_trajectory(const std::string& path);
void save_trajectory(const std::string& path, const std::vector<Pose>& poses);

}  // namespace scanfeat
