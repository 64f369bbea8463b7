#include "scanfeat/projection/scan_io.hpp"

#include <cstring>
#include <fstream>

namespace scanfeat {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'N', 'I'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw IoError("truncated scan file: " + path);
  }
  return v;
}

void write_f32s(std::ostream& out, const std::vector<double>& v) {
  std::vector<float> buf(v.begin(), v.end());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_f32s(std::istream& in, std::size_t n,
                              const std::string& path) {
  std::vector<float> buf(n);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(n * sizeof(float)))) {
    throw IoError("truncated scan file: " + path);
  }
  return {buf.begin(), buf.end()};
}

}  // namespace

ScanFile load_scan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scan file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad magic in scan file: " + path);
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw IoError("unsupported scan file version " + std::to_string(version) +
                  ": " + path);
  }
  const std::uint32_t h = read_u32(in, path);
  const std::uint32_t w = read_u32(in, path);
  if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) {
    throw IoError("implausible scan dimensions in " + path);
  }
  ScanFile out;
  out.image = ScanImage(static_cast<int>(h), static_cast<int>(w));
  const std::size_t n = static_cast<std::size_t>(h) * w;
  out.image.range = read_f32s(in, n, path);
  out.image.intensity = read_f32s(in, n, path);
  if (!in.read(reinterpret_cast<char*>(out.image.valid.data()),
               static_cast<std::streamsize>(n))) {
    throw IoError("truncated scan file: " + path);
  }
  // optional elevation table, detected by remaining payload
  std::vector<float> elev(h);
  if (in.read(reinterpret_cast<char*>(elev.data()),
              static_cast<std::streamsize>(h * sizeof(float)))) {
    out.elevation_angles = std::vector<double>(elev.begin(), elev.end());
  }
  return out;
}

void save_scan(const std::string& path, const ScanImage& image,
               const std::vector<double>* elevation_angles) {
  if (elevation_angles &&
      static_cast<int>(elevation_angles->size()) != image.height) {
    throw Error("elevation table length must equal image height");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write scan file: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(image.height));
  write_u32(out, static_cast<std::uint32_t>(image.width));
  write_f32s(out, image.range);
  write_f32s(out, image.intensity);
  out.write(reinterpret_cast<const char*>(image.valid.data()),
            static_cast<std::streamsize>(image.valid.size()));
  if (elevation_angles) write_f32s(out, *elevation_angles);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scanfeat
