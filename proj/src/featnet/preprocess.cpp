#include "scanfeat/featnet/preprocess.hpp"

#include <cmath>
#include <numbers>

namespace scanfeat::featnet {

ChannelStats compute_stats(const std::vector<ScanImage>& images) {
  double sum_r = 0, sum_i = 0;
  double sq_r = 0, sq_i = 0;
  std::size_t n = 0;
  for (const ScanImage& img : images) {
    for (std::size_t k = 0; k < img.range.size(); ++k) {
      if (!img.valid[k]) continue;
      sum_r += img.range[k];
      sq_r += img.range[k] * img.range[k];
      sum_i += img.intensity[k];
      sq_i += img.intensity[k] * img.intensity[k];
      ++n;
    }
  }
  if (n == 0) throw DegenerateStats("no valid pixels in dataset");
  ChannelStats s;
  const double dn = static_cast<double>(n);
  s.mean_range = sum_r / dn;
  s.mean_intensity = sum_i / dn;
  s.std_range = std::sqrt(std::max(0.0, sq_r / dn - s.mean_range * s.mean_range));
  s.std_intensity = std::sqrt(
      std::max(0.0, sq_i / dn - s.mean_intensity * s.mean_intensity));
  return s;
}

ScanImage normalize(const ScanImage& image, const ChannelStats& stats) {
  if (stats.std_range < 1e-12 || stats.std_intensity < 1e-12) {
    throw DegenerateStats("channel standard deviation below 1e-12");
  }
  ScanImage out(image.height, image.width);
  out.valid = image.valid;
  for (std::size_t k = 0; k < image.range.size(); ++k) {
    if (!image.valid[k]) continue;
    out.range[k] = (image.range[k] - stats.mean_range) / stats.std_range;
    out.intensity[k] =
        (image.intensity[k] - stats.mean_intensity) / stats.std_intensity;
  }
  return out;
}

namespace {

void augment_image(ScanImage& img, const AugmentConfig& cfg, Rng& rng) {
  double offset[2] = {0.0, 0.0};
  double gamma[2] = {0.0, 0.0};
  if (cfg.enable_offset_scale) {
    offset[0] = rng.uniform(-cfg.offset_range, cfg.offset_range);
    offset[1] = rng.uniform(-cfg.offset_range, cfg.offset_range);
    gamma[0] = rng.uniform(-cfg.scale_range, cfg.scale_range);
    gamma[1] = rng.uniform(-cfg.scale_range, cfg.scale_range);
  }
  const double sigma = std::sqrt(cfg.noise_variance);
  for (std::size_t k = 0; k < img.range.size(); ++k) {
    if (!img.valid[k]) continue;
    const double nr = sigma > 0.0 ? sigma * rng.normal() : 0.0;
    const double ni = sigma > 0.0 ? sigma * rng.normal() : 0.0;
    img.range[k] = (1.0 + gamma[0]) * img.range[k] + offset[0] + nr;
    img.intensity[k] = (1.0 + gamma[1]) * img.intensity[k] + offset[1] + ni;
  }
}

}  // namespace

TrainSample augment(const TrainSample& sample, const AugmentConfig& config,
                    Rng& rng) {
  TrainSample out = sample;
  augment_image(out.image_a, config, rng);
  augment_image(out.image_b, config, rng);
  return out;
}

std::optional<TrainSample> crop_sample(const ScanImage& a, const ScanImage& b,
                                       const FlowMap& flow,
                                       const CropConfig& config, Rng& rng) {
  const int ch = config.height;
  const int cw = config.width;
  if (a.height < ch || a.width < cw || b.height < ch || b.width < cw) {
    return std::nullopt;
  }
  std::optional<TrainSample> best;
  std::size_t best_count = 0;

  for (int attempt = 0; attempt < config.max_tries; ++attempt) {
    const int r0 = a.height == ch
                       ? 0
                       : static_cast<int>(rng.index(a.height - ch + 1));
    const int c0 = static_cast<int>(rng.index(a.width));  // columns wrap

    // mean flow target over the candidate crop decides the second crop
    double sum_v = 0.0, sin_u = 0.0, cos_u = 0.0;
    std::size_t cnt = 0;
    for (int r = 0; r < ch; ++r) {
      for (int c = 0; c < cw; ++c) {
        const std::size_t i =
            flow.idx(r0 + r, (c0 + c) % a.width);
        if (!flow.valid[i]) continue;
        const double ang =
            2.0 * std::numbers::pi * flow.target_u[i] / b.width;
        sin_u += std::sin(ang);
        cos_u += std::cos(ang);
        sum_v += flow.target_v[i];
        ++cnt;
      }
    }
    if (cnt < 8) continue;
    double center_u = std::atan2(sin_u, cos_u) / (2.0 * std::numbers::pi) *
                      b.width;
    if (center_u < 0.0) center_u += b.width;
    const double center_v = sum_v / static_cast<double>(cnt);
    int rb0 = static_cast<int>(std::llround(center_v)) - ch / 2;
    rb0 = std::clamp(rb0, 0, b.height - ch);
    int cb0 = static_cast<int>(std::llround(center_u)) - cw / 2;
    cb0 = ((cb0 % b.width) + b.width) % b.width;

    TrainSample sample;
    sample.image_a = ScanImage(ch, cw);
    sample.image_b = ScanImage(ch, cw);
    sample.flow = FlowMap(ch, cw);
    for (int r = 0; r < ch; ++r) {
      for (int c = 0; c < cw; ++c) {
        const std::size_t src_a = a.idx(r0 + r, (c0 + c) % a.width);
        const std::size_t dst = sample.image_a.idx(r, c);
        sample.image_a.range[dst] = a.range[src_a];
        sample.image_a.intensity[dst] = a.intensity[src_a];
        sample.image_a.valid[dst] = a.valid[src_a];
        const std::size_t src_b = b.idx(rb0 + r, (cb0 + c) % b.width);
        sample.image_b.range[dst] = b.range[src_b];
        sample.image_b.intensity[dst] = b.intensity[src_b];
        sample.image_b.valid[dst] = b.valid[src_b];
      }
    }
    std::size_t kept = 0;
    for (int r = 0; r < ch; ++r) {
      for (int c = 0; c < cw; ++c) {
        const std::size_t src = flow.idx(r0 + r, (c0 + c) % a.width);
        if (!flow.valid[src]) continue;
        double u = flow.target_u[src] - cb0;
        u = std::fmod(u, static_cast<double>(b.width));
        if (u < 0.0) u += b.width;
        const double v = flow.target_v[src] - rb0;
        if (u > cw - 1 || v < 0.0 || v > ch - 1) continue;
        const std::size_t dst = sample.flow.idx(r, c);
        sample.flow.target_u[dst] = u;
        sample.flow.target_v[dst] = v;
        sample.flow.valid[dst] = 1;
        ++kept;
      }
    }
    if (kept >= config.min_valid_flow) return sample;
    if (kept > best_count) {
      best_count = kept;
      best = std::move(sample);
    }
  }
  if (best_count >= 16) return best;
  return std::nullopt;
}

}  // namespace scanfeat::featnet
