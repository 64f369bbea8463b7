#include "scanfeat/extract/extract.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace scanfeat::extract {

featnet::Tensor fuse_scores(const featnet::DenseFeatureMap& maps) {
  featnet::Tensor s(1, maps.height, maps.width);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    s.data[i] = maps.reliability.data[i] * maps.repeatability.data[i];
  }
  return s;
}

FeatureSet extract(const featnet::DenseFeatureMap& maps,
                   const OrderedPointCloud& cloud, double score_threshold,
                   int nms_radius) {
  if (maps.height != cloud.height || maps.width != cloud.width) {
    throw featnet::ShapeMismatch("maps and cloud dimensions disagree");
  }
  const featnet::Tensor score = fuse_scores(maps);
  const int h = maps.height, w = maps.width;

  struct Candidate {
    int v, u;
    double s;
  };
  std::vector<Candidate> candidates;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double s = score.data[static_cast<std::size_t>(v) * w + u];
      if (s > score_threshold) candidates.push_back({v, u, s});
    }
  }

  // suppression via a window scan over the dense score map
  const auto at = [&](int v, int u) {
    return score.data[static_cast<std::size_t>(v) * w + u];
  };
  FeatureSet out;
  const std::size_t n = maps.reliability.plane();
  for (const Candidate& c : candidates) {
    bool keep = true;
    for (int dv = -nms_radius; dv <= nms_radius && keep; ++dv) {
      const int v = c.v + dv;
      if (v < 0 || v >= h) continue;
      for (int du = -nms_radius; du <= nms_radius; ++du) {
        if (dv == 0 && du == 0) continue;
        int u = (c.u + du) % w;
        if (u < 0) u += w;
        if (u == c.u && v == c.v) continue;  // tiny widths alias onto self
        const double s = at(v, u);
        if (s <= score_threshold) continue;
        if (s > c.s || (s == c.s && (v < c.v || (v == c.v && u < c.u)))) {
          keep = false;
          break;
        }
      }
    }
    if (!keep) continue;
    if (!cloud.is_valid(c.v, c.u)) continue;  // invalid cells dropped post-NMS
    Keypoint kp;
    kp.u = c.u;
    kp.v = c.v;
    kp.point = cloud.point(c.v, c.u);
    kp.score = c.s;
    out.keypoints.push_back(kp);
    Eigen::VectorXd desc(maps.dim);
    for (int d = 0; d < maps.dim; ++d) {
      desc[d] = maps.descriptors.data[d * n + static_cast<std::size_t>(c.v) * w +
                                      c.u];
    }
    out.descriptors.push_back(std::move(desc));
  }

  // sort by descending score, deterministic tie-break on (row, col)
  std::vector<std::size_t> order(out.keypoints.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Keypoint& ka = out.keypoints[a];
    const Keypoint& kb = out.keypoints[b];
    if (ka.score != kb.score) return ka.score > kb.score;
    if (ka.v != kb.v) return ka.v < kb.v;
    return ka.u < kb.u;
  });
  FeatureSet sorted;
  sorted.keypoints.reserve(order.size());
  sorted.descriptors.reserve(order.size());
  for (std::size_t i : order) {
    sorted.keypoints.push_back(out.keypoints[i]);
    sorted.descriptors.push_back(std::move(out.descriptors[i]));
  }
  return sorted;
}

namespace {

constexpr char kMagic[4] = {'F', '3', 'D', 'L'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw IoError("truncated feature file: " + path);
  }
  return v;
}

}  // namespace

void save_features(const std::string& path, const FeatureSet& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path);
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(features.size()));
  write_u32(out, static_cast<std::uint32_t>(features.dim()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Keypoint& kp = features.keypoints[i];
    write_u32(out, static_cast<std::uint32_t>(kp.u));
    write_u32(out, static_cast<std::uint32_t>(kp.v));
    float buf[4] = {static_cast<float>(kp.point.x()),
                    static_cast<float>(kp.point.y()),
                    static_cast<float>(kp.point.z()),
                    static_cast<float>(kp.score)};
    out.write(reinterpret_cast<const char*>(buf), sizeof buf);
    const Eigen::VectorXd& d = features.descriptors[i];
    std::vector<float> desc(d.size());
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      desc[k] = static_cast<float>(d[k]);
    }
    out.write(reinterpret_cast<const char*>(desc.data()),
              static_cast<std::streamsize>(desc.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path);
}

FeatureSet load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad magic in feature file: " + path);
  }
  const std::uint32_t count = read_u32(in, path);
  const std::uint32_t dim = read_u32(in, path);
  if (dim == 0 || dim > 4096 || count > (1u << 24)) {
    throw IoError("implausible feature file header: " + path);
  }
  FeatureSet out;
  out.keypoints.resize(count);
  out.descriptors.resize(count);
  std::vector<float> desc(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    Keypoint& kp = out.keypoints[i];
    kp.u = static_cast<int>(read_u32(in, path));
    kp.v = static_cast<int>(read_u32(in, path));
    float buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof buf) ||
        !in.read(reinterpret_cast<char*>(desc.data()),
                 static_cast<std::streamsize>(dim * sizeof(float)))) {
      throw IoError("truncated feature file: " + path);
    }
    kp.point = {buf[0], buf[1], buf[2]};
    kp.score = buf[3];
    out.descriptors[i] = Eigen::VectorXd(dim);
    for (std::uint32_t k = 0; k < dim; ++k) out.descriptors[i][k] = desc[k];
  }
  return out;
}

}  // namespace scanfeat::extract
