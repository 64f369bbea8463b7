#include "scanfeat/featnet/weights_io.hpp"

#include <cstring>
#include <fstream>

namespace scanfeat::featnet {

namespace {

constexpr char kMagic[4] = {'W', '3', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw IoError("truncated weights file: " + path);
  }
  return v;
}

void write_layer(std::ostream& out, const ConvLayer& l) {
  std::vector<float> buf(l.weight.size() + l.bias.size());
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      buf[k++] = static_cast<float>(l.weight(r, c));
    }
  }
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
    buf[k++] = static_cast<float>(l.bias(i));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_layer(std::istream& in, ConvLayer& l, const std::string& path) {
  std::vector<float> buf(l.weight.size() + l.bias.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw IoError("truncated weights file: " + path);
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      l.weight(r, c) = buf[k++];
    }
  }
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = buf[k++];
}

}  // namespace

namespace {

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

double read_f64(std::istream& in, const std::string& path) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) {
    throw IoError("truncated weights file: " + path);
  }
  return v;
}

}  // namespace

void save_weights(const std::string& path, const NetworkConfig& config,
                  const NetworkWeights& weights, const ChannelStats& stats) {
  check_weights(config, weights);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights file: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_f64(out, stats.mean_range);
  write_f64(out, stats.std_range);
  write_f64(out, stats.mean_intensity);
  write_f64(out, stats.std_intensity);
  write_u32(out, static_cast<std::uint32_t>(config.input_channels));
  write_u32(out, static_cast<std::uint32_t>(config.descriptor_dim));
  write_u32(out, static_cast<std::uint32_t>(config.activation));
  write_u32(out, static_cast<std::uint32_t>(config.patch_size));
  write_u32(out, static_cast<std::uint32_t>(config.batch_size));
  write_u32(out, static_cast<std::uint32_t>(config.trunk.size()));
  for (const ConvSpec& s : config.trunk) {
    write_u32(out, static_cast<std::uint32_t>(s.out_channels));
    write_u32(out, static_cast<std::uint32_t>(s.kernel));
    write_u32(out, static_cast<std::uint32_t>(s.dilation));
  }
  for (const ConvLayer& l : weights.trunk) write_layer(out, l);
  write_layer(out, weights.desc_head);
  write_layer(out, weights.rel_head);
  write_layer(out, weights.rep_head);
  if (!out) throw IoError("write failed: " + path);
}

WeightsFile load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad magic in weights file: " + path);
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw IoError("unsupported weights version: " + path);
  }
  WeightsFile file;
  file.stats.mean_range = read_f64(in, path);
  file.stats.std_range = read_f64(in, path);
  file.stats.mean_intensity = read_f64(in, path);
  file.stats.std_intensity = read_f64(in, path);
  file.config.input_channels = static_cast<int>(read_u32(in, path));
  file.config.descriptor_dim = static_cast<int>(read_u32(in, path));
  const std::uint32_t act = read_u32(in, path);
  if (act > 2) throw IoError("unknown activation in weights file: " + path);
  file.config.activation = static_cast<Activation>(act);
  file.config.patch_size = static_cast<int>(read_u32(in, path));
  file.config.batch_size = static_cast<int>(read_u32(in, path));
  const std::uint32_t depth = read_u32(in, path);
  if (depth == 0 || depth > 64) {
    throw IoError("implausible trunk depth in weights file: " + path);
  }
  file.config.trunk.clear();
  for (std::uint32_t i = 0; i < depth; ++i) {
    ConvSpec s;
    s.out_channels = static_cast<int>(read_u32(in, path));
    s.kernel = static_cast<int>(read_u32(in, path));
    s.dilation = static_cast<int>(read_u32(in, path));
    if (s.out_channels <= 0 || s.out_channels > 4096 ||
        (s.kernel != 1 && s.kernel != 3) || s.dilation <= 0) {
      throw IoError("implausible layer spec in weights file: " + path);
    }
    file.config.trunk.push_back(s);
  }
  file.weights = init_weights(file.config, 0);
  for (ConvLayer& l : file.weights.trunk) read_layer(in, l, path);
  read_layer(in, file.weights.desc_head, path);
  read_layer(in, file.weights.rel_head, path);
  read_layer(in, file.weights.rep_head, path);
  return file;
}

}  // namespace scanfeat::featnet
