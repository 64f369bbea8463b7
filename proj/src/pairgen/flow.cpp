#include "scanfeat/pairgen/flow.hpp"

#include "scanfeat/projection/scan_io.hpp"

namespace scanfeat {

FlowMap load_flow(const std::string& path) {
  const ScanFile file = load_scan(path);
  FlowMap flow(file.image.height, file.image.width);
  flow.target_u = file.image.range;
  flow.target_v = file.image.intensity;
  flow.valid = file.image.valid;
  return flow;
}

void save_flow(const std::string& path, const FlowMap& flow) {
  ScanImage img(flow.height, flow.width);
  img.range = flow.target_u;
  img.intensity = flow.target_v;
  img.valid = flow.valid;
  save_scan(path, img);
}

}  // namespace scanfeat
