#include "scanfeat/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace scanfeat {

namespace {

using nlohmann::json;

// pull a scalar if present, tracking consumed keys
template <typename T>
void take(const json& j, std::set<std::string>& seen, const char* key,
          T& out) {
  if (!j.contains(key)) return;
  seen.insert(key);
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");

  PipelineConfig c;
  std::set<std::string> seen;
  take(j, seen, "seed", c.seed);
  take(j, seen, "score_threshold", c.score_threshold);
  take(j, seen, "nms_radius", c.nms_radius);
  take(j, seen, "tau1", c.tau1);
  take(j, seen, "tau2", c.tau2);
  take(j, seen, "tau3", c.tau3);
  take(j, seen, "overlap_threshold", c.overlap_threshold);
  take(j, seen, "shell_inner", c.shell_inner);
  take(j, seen, "shell_outer", c.shell_outer);
  take(j, seen, "correspondence_distance", c.correspondence_distance);
  take(j, seen, "occlusion_margin", c.occlusion_margin);
  take(j, seen, "anchor_stride", c.anchor_stride);
  take(j, seen, "scale_min", c.synth.scale_min);
  take(j, seen, "scale_max", c.synth.scale_max);
  take(j, seen, "max_u_shift", c.synth.max_u_shift);
  take(j, seen, "max_v_shift", c.synth.max_v_shift);
  take(j, seen, "max_tilt", c.synth.max_tilt);
  take(j, seen, "descriptor_dim", c.network.descriptor_dim);
  take(j, seen, "patch_size", c.network.patch_size);
  take(j, seen, "batch_size", c.network.batch_size);
  take(j, seen, "crop_height", c.crop.height);
  take(j, seen, "crop_width", c.crop.width);
  take(j, seen, "stage1_epochs", c.schedule.stage1_epochs);
  take(j, seen, "stage2_epochs", c.schedule.stage2_epochs);
  take(j, seen, "learning_rate", c.training.learning_rate);
  take(j, seen, "momentum", c.training.momentum);
  take(j, seen, "max_steps", c.training.max_steps);
  take(j, seen, "noise_variance", c.training.augment.noise_variance);
  take(j, seen, "offset_range", c.training.augment.offset_range);
  take(j, seen, "scale_range", c.training.augment.scale_range);
  take(j, seen, "ransac_inlier_dist", c.ransac_inlier_dist);
  take(j, seen, "ransac_iterations", c.ransac_iterations);
  take(j, seen, "icp_max_iterations", c.icp.max_iterations);
  take(j, seen, "icp_correspondence_distance",
       c.icp.correspondence_distance);
  take(j, seen, "vocab_k", c.vocab_k);
  take(j, seen, "hist_threshold", c.hist_threshold);
  take(j, seen, "min_loop_gap", c.min_loop_gap);
  take(j, seen, "min_loop_inliers", c.min_loop_inliers);
  take(j, seen, "lm_max_iterations", c.lm.max_iterations);
  take(j, seen, "lm_lambda_init", c.lm.lambda_init);
  std::string trunk;
  take(j, seen, "trunk", trunk);
  if (!trunk.empty()) {
    if (trunk == "default") {
      // keep it
    } else if (trunk == "toy") {
      const int d = c.network.descriptor_dim;
      c.network = featnet::NetworkConfig::toy(d);
      c.network.patch_size = 8;
    } else {
      throw ConfigError("unknown trunk preset: " + trunk);
    }
  }

  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) {
      throw ConfigError("unknown config key: " + it.key());
    }
  }

  // propagate shared knobs
  c.training.batch_size = c.network.batch_size;
  c.training.loss.patch_size = c.network.patch_size;
  if (c.synth.scale_min < 1.0 || c.synth.scale_max < c.synth.scale_min) {
    throw ConfigError("scale interval must satisfy 1 <= min <= max");
  }
  if (c.overlap_threshold <= 0.0 || c.overlap_threshold > 1.0) {
    throw ConfigError("overlap_threshold must lie in (0, 1]");
  }
  if (c.shell_inner <= 0.0 || c.shell_outer <= c.shell_inner) {
    throw ConfigError("shell radii must satisfy 0 < inner < outer");
  }
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["score_threshold"] = c.score_threshold;
  j["nms_radius"] = c.nms_radius;
  j["tau1"] = c.tau1;
  j["tau2"] = c.tau2;
  j["tau3"] = c.tau3;
  j["overlap_threshold"] = c.overlap_threshold;
  j["shell_inner"] = c.shell_inner;
  j["shell_outer"] = c.shell_outer;
  j["correspondence_distance"] = c.correspondence_distance;
  j["occlusion_margin"] = c.occlusion_margin;
  j["anchor_stride"] = c.anchor_stride;
  j["scale_min"] = c.synth.scale_min;
  j["scale_max"] = c.synth.scale_max;
  j["max_u_shift"] = c.synth.max_u_shift;
  j["max_v_shift"] = c.synth.max_v_shift;
  j["max_tilt"] = c.synth.max_tilt;
  j["descriptor_dim"] = c.network.descriptor_dim;
  j["patch_size"] = c.network.patch_size;
  j["batch_size"] = c.network.batch_size;
  json trunk = json::array();
  for (const featnet::ConvSpec& s : c.network.trunk) {
    trunk.push_back({{"channels", s.out_channels},
                     {"kernel", s.kernel},
                     {"dilation", s.dilation}});
  }
  j["trunk_layers"] = trunk;
  j["crop_height"] = c.crop.height;
  j["crop_width"] = c.crop.width;
  j["stage1_epochs"] = c.schedule.stage1_epochs;
  j["stage2_epochs"] = c.schedule.stage2_epochs;
  j["learning_rate"] = c.training.learning_rate;
  j["momentum"] = c.training.momentum;
  j["max_steps"] = c.training.max_steps;
  j["noise_variance"] = c.training.augment.noise_variance;
  j["offset_range"] = c.training.augment.offset_range;
  j["scale_range"] = c.training.augment.scale_range;
  j["ransac_inlier_dist"] = c.ransac_inlier_dist;
  j["ransac_iterations"] = c.ransac_iterations;
  j["icp_max_iterations"] = c.icp.max_iterations;
  j["icp_correspondence_distance"] = c.icp.correspondence_distance;
  j["vocab_k"] = c.vocab_k;
  j["hist_threshold"] = c.hist_threshold;
  j["min_loop_gap"] = c.min_loop_gap;
  j["min_loop_inliers"] = c.min_loop_inliers;
  j["lm_max_iterations"] = c.lm.max_iterations;
  j["lm_lambda_init"] = c.lm.lambda_init;
  return j.dump(2);
}

}  // namespace scanfeat
