#include "scanfeat/extract/handcrafted.hpp"

#include <algorithm>
#include <cmath>

namespace scanfeat::extract {

namespace {

struct Channels {
  std::vector<double> range;
  std::vector<double> intensity;
};

// per-image standardization over valid pixels
Channels standardized(const ScanImage& img) {
  double mr = 0, mi = 0, vr = 0, vi = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    if (!img.valid[i]) continue;
    mr += img.range[i];
    mi += img.intensity[i];
    ++n;
  }
  if (n == 0) return {img.range, img.intensity};
  mr /= n;
  mi /= n;
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    if (!img.valid[i]) continue;
    vr += (img.range[i] - mr) * (img.range[i] - mr);
    vi += (img.intensity[i] - mi) * (img.intensity[i] - mi);
  }
  const double sr = std::max(std::sqrt(vr / n), 1e-9);
  const double si = std::max(std::sqrt(vi / n), 1e-9);
  Channels out;
  out.range.assign(img.range.size(), 0.0);
  out.intensity.assign(img.range.size(), 0.0);
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    if (!img.valid[i]) continue;
    out.range[i] = (img.range[i] - mr) / sr;
    out.intensity[i] = (img.intensity[i] - mi) / si;
  }
  return out;
}

}  // namespace

featnet::DenseFeatureMap handcrafted_maps(const ScanImage& image,
                                          const HandcraftedConfig& config) {
  const int h = image.height, w = image.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const Channels ch = standardized(image);

  const auto sample = [&](const std::vector<double>& plane, int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = ((c % w) + w) % w;
    return plane[static_cast<std::size_t>(r) * w + c];
  };
  const auto valid_at = [&](int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = ((c % w) + w) % w;
    return image.valid[static_cast<std::size_t>(r) * w + c] != 0;
  };

  // Sobel gradients of both channels
  std::vector<double> gx(2 * n, 0.0), gy(2 * n, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (!image.valid[i]) continue;
      for (int k = 0; k < 2; ++k) {
        const std::vector<double>& plane = k == 0 ? ch.range : ch.intensity;
        const double p00 = sample(plane, r - 1, c - 1);
        const double p01 = sample(plane, r - 1, c);
        const double p02 = sample(plane, r - 1, c + 1);
        const double p10 = sample(plane, r, c - 1);
        const double p12 = sample(plane, r, c + 1);
        const double p20 = sample(plane, r + 1, c - 1);
        const double p21 = sample(plane, r + 1, c);
        const double p22 = sample(plane, r + 1, c + 1);
        gx[k * n + i] = (p02 + 2 * p12 + p22) - (p00 + 2 * p10 + p20);
        gy[k * n + i] = (p20 + 2 * p21 + p22) - (p00 + 2 * p01 + p02);
      }
    }
  }

  // Harris response over a 3x3 structure tensor, both channels pooled
  std::vector<double> response(n, 0.0);
  double mean_pos = 0.0;
  std::size_t pos = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (!image.valid[i]) continue;
      double axx = 0, axy = 0, ayy = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (!valid_at(r + dr, c + dc)) continue;
          const int rr = std::clamp(r + dr, 0, h - 1);
          const int cc = ((c + dc) % w + w) % w;
          const std::size_t j = static_cast<std::size_t>(rr) * w + cc;
          for (int k = 0; k < 2; ++k) {
            axx += gx[k * n + j] * gx[k * n + j];
            axy += gx[k * n + j] * gy[k * n + j];
            ayy += gy[k * n + j] * gy[k * n + j];
          }
        }
      }
      const double det = axx * ayy - axy * axy;
      const double tr = axx + ayy;
      const double v = det - config.harris_k * tr * tr;
      if (v > 0.0) {
        response[i] = v;
        mean_pos += v;
        ++pos;
      }
    }
  }
  if (pos > 0) mean_pos /= static_cast<double>(pos);

  featnet::DenseFeatureMap map;
  map.height = h;
  map.width = w;
  map.dim = 32;
  map.descriptors = featnet::Tensor(32, h, w);
  map.reliability = featnet::Tensor(1, h, w);
  map.repeatability = featnet::Tensor(1, h, w);

  const double denom = mean_pos > 0.0 ? mean_pos : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    // squashed response in [0,1); both heads carry its square root so the
    // fused score equals the squashed response itself
    const double s = response[i] / (response[i] + denom);
    const double root = std::sqrt(s);
    map.reliability.data[i] = root;
    map.repeatability.data[i] = root;
  }

  const int step = config.descriptor_step;
  const int offs[4] = {-3 * step / 2, -step / 2, step / 2, 3 * step / 2};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      double patch[32];
      int k = 0;
      for (int ci = 0; ci < 2; ++ci) {
        const std::vector<double>& plane = ci == 0 ? ch.range : ch.intensity;
        double mean = 0.0;
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) {
            patch[k] = sample(plane, r + offs[a], c + offs[b]);
            mean += patch[k];
            ++k;
          }
        }
        mean /= 16.0;
        for (int j = k - 16; j < k; ++j) patch[j] -= mean;
      }
      double norm = 0.0;
      for (double v : patch) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-12) {
        map.descriptors.data[i] = 1.0;  // plane 0 gets the fallback unit
      } else {
        for (int d = 0; d < 32; ++d) {
          map.descriptors.data[d * n + i] = patch[d] / norm;
        }
      }
    }
  }
  return map;
}

}  // namespace scanfeat::extract
