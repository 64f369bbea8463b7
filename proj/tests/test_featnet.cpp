#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "scanfeat/core/rng.hpp"
#include "scanfeat/featnet/loss.hpp"
#include "scanfeat/featnet/network.hpp"
#include "scanfeat/featnet/preprocess.hpp"
#include "scanfeat/featnet/train.hpp"
#include "scanfeat/featnet/weights_io.hpp"

using namespace scanfeat;
using namespace scanfeat::featnet;

namespace {

ScanImage random_scan(int h, int w, std::uint64_t seed, double valid_p = 1.0) {
  Rng rng(seed);
  ScanImage img(h, w);
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    if (rng.uniform() >= valid_p) continue;
    img.range[i] = rng.uniform(-1.0, 1.0);
    img.intensity[i] = rng.uniform(-1.0, 1.0);
    img.valid[i] = 1;
  }
  return img;
}

Tensor random_tensor(int c, int h, int w, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(c, h, w);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double rel_error(const std::vector<double>& analytic,
                 const std::vector<double>& numeric) {
  double scale = 1e-8;
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
  }
  return diff / scale;
}

constexpr double kFdEps = 1e-4;

}  // namespace

// ---------------------------------------------------------------------------
// forward-pass contracts

TEST_CASE("forward output maps match input spatial dims") {
  const NetworkConfig cfg = NetworkConfig::toy(6);
  const NetworkWeights w = init_weights(cfg, 1);
  for (auto [h, wd] : {std::pair{5, 9}, std::pair{16, 40}}) {
    const DenseFeatureMap map = forward(random_scan(h, wd, 7), cfg, w);
    CHECK(map.height == h);
    CHECK(map.width == wd);
    CHECK(map.dim == 6);
    CHECK(map.descriptors.height == h);
    CHECK(map.reliability.width == wd);
  }
}

TEST_CASE("zero input with zero biases gives spatially constant maps") {
  const NetworkConfig cfg = NetworkConfig::toy(4);
  const NetworkWeights w = init_weights(cfg, 3);  // biases start at zero
  ScanImage img(6, 12);  // all invalid: both channels zero everywhere
  const DenseFeatureMap map = forward(img, cfg, w);
  const std::size_t n = map.reliability.plane();
  for (std::size_t p = 1; p < n; ++p) {
    CHECK(map.reliability.data[p] == map.reliability.data[0]);
    CHECK(map.repeatability.data[p] == map.repeatability.data[0]);
    for (int d = 0; d < map.dim; ++d) {
      CHECK(map.descriptors.data[d * n + p] == map.descriptors.data[d * n]);
    }
  }
  CHECK(map.reliability.data[0] == doctest::Approx(0.5));
}

TEST_CASE("descriptors are unit norm after every forward pass") {
  const NetworkConfig cfg = NetworkConfig::toy(8);
  const NetworkWeights w = init_weights(cfg, 5);
  const DenseFeatureMap map = forward(random_scan(10, 24, 9, 0.9), cfg, w);
  const std::size_t n = map.reliability.plane();
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int d = 0; d < map.dim; ++d) {
      s += map.descriptors.data[d * n + p] * map.descriptors.data[d * n + p];
    }
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
    CHECK(map.reliability.data[p] > 0.0);
    CHECK(map.reliability.data[p] < 1.0);
    CHECK(map.repeatability.data[p] > 0.0);
    CHECK(map.repeatability.data[p] < 1.0);
  }
}

TEST_CASE("column rotation commutes with the network exactly") {
  const NetworkConfig cfg = NetworkConfig::toy(5);
  const NetworkWeights w = init_weights(cfg, 11);
  const int h = 8, wd = 20, k = 7;
  const ScanImage img = random_scan(h, wd, 13);
  ScanImage rotated(h, wd);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      const std::size_t src = img.idx(r, c);
      const std::size_t dst = img.idx(r, (c + k) % wd);
      rotated.range[dst] = img.range[src];
      rotated.intensity[dst] = img.intensity[src];
      rotated.valid[dst] = img.valid[src];
    }
  }
  const DenseFeatureMap base = forward(img, cfg, w);
  const DenseFeatureMap rot = forward(rotated, cfg, w);
  const std::size_t n = base.reliability.plane();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      const std::size_t src = static_cast<std::size_t>(r) * wd + c;
      const std::size_t dst = static_cast<std::size_t>(r) * wd + (c + k) % wd;
      CHECK(rot.reliability.data[dst] == base.reliability.data[src]);
      CHECK(rot.repeatability.data[dst] == base.repeatability.data[src]);
      for (int d = 0; d < base.dim; ++d) {
        CHECK(rot.descriptors.data[d * n + dst] ==
              base.descriptors.data[d * n + src]);
      }
    }
  }
}

TEST_CASE("forward rejects weights that disagree with the config") {
  const NetworkConfig cfg = NetworkConfig::toy(4);
  NetworkWeights w = init_weights(cfg, 1);
  NetworkConfig other = cfg;
  other.descriptor_dim = 7;
  CHECK_THROWS_AS(forward(random_scan(4, 8, 1), other, w), ShapeMismatch);
}

// ---------------------------------------------------------------------------
// normalization and augmentation

TEST_CASE("normalize yields zero mean unit variance over valid pixels") {
  Rng rng(17);
  ScanImage img(20, 30);
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    if (rng.uniform() < 0.15) continue;
    img.range[i] = rng.uniform(2.0, 60.0);
    img.intensity[i] = rng.uniform(0.0, 1.0);
    img.valid[i] = 1;
  }
  const ChannelStats stats = compute_stats({img});
  const ScanImage out = normalize(img, stats);
  double m = 0, v = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < out.range.size(); ++i) {
    if (!out.valid[i]) {
      CHECK(out.range[i] == 0.0);
      continue;
    }
    m += out.range[i];
    v += out.range[i] * out.range[i];
    ++n;
  }
  m /= n;
  v = v / n - m * m;
  CHECK(std::abs(m) < 1e-6);
  CHECK(std::abs(v - 1.0) < 1e-6);
}

TEST_CASE("normalize with identity stats is the identity") {
  const ScanImage img = random_scan(6, 10, 19);
  ChannelStats stats;  // mean 0, std 1
  const ScanImage out = normalize(img, stats);
  for (std::size_t i = 0; i < img.range.size(); ++i) {
    CHECK(out.range[i] == img.range[i]);
    CHECK(out.intensity[i] == img.intensity[i]);
  }
}

TEST_CASE("per-dataset stats normalize each dataset independently") {
  Rng rng(23);
  std::vector<ScanImage> set_a, set_b;
  for (int k = 0; k < 3; ++k) {
    ScanImage a(8, 12), b(8, 12);
    for (std::size_t i = 0; i < a.range.size(); ++i) {
      a.range[i] = rng.uniform(10, 20);
      a.intensity[i] = rng.uniform(0, 1);
      a.valid[i] = 1;
      b.range[i] = rng.uniform(50, 90);
      b.intensity[i] = rng.uniform(0.4, 0.6);
      b.valid[i] = 1;
    }
    set_a.push_back(a);
    set_b.push_back(b);
  }
  for (const auto* set : {&set_a, &set_b}) {
    const ChannelStats stats = compute_stats(*set);
    double m = 0;
    std::size_t n = 0;
    for (const ScanImage& img : *set) {
      const ScanImage out = normalize(img, stats);
      for (std::size_t i = 0; i < out.range.size(); ++i) {
        m += out.range[i];
        ++n;
      }
    }
    CHECK(std::abs(m / n) < 1e-9);
  }
}

TEST_CASE("normalize rejects degenerate stats") {
  ChannelStats stats;
  stats.std_range = 1e-13;
  CHECK_THROWS_AS(normalize(random_scan(2, 4, 1), stats), DegenerateStats);
}

TEST_CASE("augment with a disabled config is the identity") {
  TrainSample sample;
  sample.image_a = random_scan(6, 10, 29);
  sample.image_b = random_scan(6, 10, 31);
  sample.flow = FlowMap(6, 10);
  AugmentConfig cfg;
  cfg.noise_variance = 0.0;
  cfg.enable_offset_scale = false;
  Rng rng(1);
  const TrainSample out = augment(sample, cfg, rng);
  for (std::size_t i = 0; i < sample.image_a.range.size(); ++i) {
    CHECK(out.image_a.range[i] == sample.image_a.range[i]);
    CHECK(out.image_b.intensity[i] == sample.image_b.intensity[i]);
  }
}

TEST_CASE("augment noise has the configured variance") {
  TrainSample sample;
  sample.image_a = ScanImage(1000, 500);
  for (std::size_t i = 0; i < sample.image_a.range.size(); ++i) {
    sample.image_a.valid[i] = 1;
  }
  sample.image_b = ScanImage(1, 1);
  sample.flow = FlowMap(1000, 500);
  AugmentConfig cfg;
  cfg.enable_offset_scale = false;
  Rng rng(37);
  const TrainSample out = augment(sample, cfg, rng);
  double m = 0, v = 0;
  const std::size_t n = sample.image_a.range.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = out.image_a.range[i] - sample.image_a.range[i];
    m += d;
    v += d * d;
  }
  m /= n;
  v = v / n - m * m;
  CHECK(std::abs(m) < 0.002);
  CHECK(std::abs(v - 0.04) < 0.002);
}

TEST_CASE("augment offsets are uniform on their interval") {
  // Kolmogorov-Smirnov against U(-0.1, 0.1) at the 1% level
  AugmentConfig cfg;
  cfg.noise_variance = 0.0;
  cfg.scale_range = 0.0;
  TrainSample sample;
  sample.image_a = ScanImage(1, 1);
  sample.image_a.range[0] = 0.0;
  sample.image_a.intensity[0] = 0.0;
  sample.image_a.valid[0] = 1;
  sample.image_b = sample.image_a;
  sample.flow = FlowMap(1, 1);
  Rng rng(41);
  std::vector<double> draws;
  for (int k = 0; k < 2000; ++k) {
    const TrainSample out = augment(sample, cfg, rng);
    draws.push_back(out.image_a.range[0]);
    draws.push_back(out.image_a.intensity[0]);
  }
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d_stat = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = (draws[i] + 0.1) / 0.2;  // U(-0.1,0.1) cdf
    d_stat = std::max(d_stat, std::max(std::abs((i + 1) / n - f),
                                       std::abs(f - i / n)));
    CHECK(draws[i] >= -0.1);
    CHECK(draws[i] <= 0.1);
  }
  CHECK(d_stat < 1.63 / std::sqrt(n));
}

// ---------------------------------------------------------------------------
// loss contracts

namespace {

DenseFeatureMap random_map(int h, int w, int dim, std::uint64_t seed) {
  Rng rng(seed);
  DenseFeatureMap map;
  map.height = h;
  map.width = w;
  map.dim = dim;
  map.descriptors = Tensor(dim, h, w);
  map.reliability = Tensor(1, h, w);
  map.repeatability = Tensor(1, h, w);
  const std::size_t n = map.reliability.plane();
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double v = rng.normal();
      map.descriptors.data[d * n + p] = v;
      s += v * v;
    }
    const double norm = std::sqrt(s);
    for (int d = 0; d < dim; ++d) {
      map.descriptors.data[d * n + p] *= 0.95 / norm;
    }
    map.reliability.data[p] = rng.uniform(0.05, 0.95);
    map.repeatability.data[p] = rng.uniform(0.05, 0.95);
  }
  return map;
}

FlowMap identity_flow(int h, int w) {
  FlowMap flow(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = flow.idx(r, c);
      flow.target_u[i] = c;
      flow.target_v[i] = r;
      flow.valid[i] = 1;
    }
  }
  return flow;
}

}  // namespace

TEST_CASE("identity warp of identical maps zeroes the cosine term") {
  const DenseFeatureMap map = random_map(8, 16, 4, 43);
  const FlowMap flow = identity_flow(8, 16);
  const LossBreakdown lb = loss(map, map, flow, {}, {}, LossConfig{});
  CHECK(std::abs(lb.repeatability) < 1e-9);
}

TEST_CASE("constant repeatability maps have peakiness exactly 1") {
  DenseFeatureMap a = random_map(8, 16, 4, 47);
  DenseFeatureMap b = random_map(8, 16, 4, 53);
  for (double& v : a.repeatability.data) v = 0.37;
  for (double& v : b.repeatability.data) v = 0.61;
  const LossBreakdown lb =
      loss(a, b, identity_flow(8, 16), {}, {}, LossConfig{});
  CHECK(lb.peakiness == doctest::Approx(1.0));
}

TEST_CASE("loss throws without valid correspondences") {
  const DenseFeatureMap map = random_map(4, 8, 4, 59);
  CHECK_THROWS_AS(loss(map, map, FlowMap(4, 8), {}, {}, LossConfig{}),
                  NoValidCorrespondences);
}

// independent plain-loop reference of the three terms
namespace {

double ref_loss(const DenseFeatureMap& a, const DenseFeatureMap& b,
                const FlowMap& flow, const LossConfig& cfg) {
  const int h = a.height, w = a.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const int N = cfg.patch_size;

  // warp rep_b through the flow with bilinear weights (columns wrap)
  std::vector<double> warped(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!flow.valid[i]) continue;
    double u = std::fmod(flow.target_u[i], static_cast<double>(w));
    if (u < 0) u += w;
    const double v = flow.target_v[i];
    const int c0 = std::min(static_cast<int>(std::floor(u)), w - 1);
    const int r0 = std::min(static_cast<int>(std::floor(v)), h - 1);
    const double fu = u - std::floor(u);
    const double fv = v - r0;
    const int c1 = (c0 + 1) % w;
    const int r1 = std::min(r0 + 1, h - 1);
    warped[i] =
        (1 - fv) * ((1 - fu) * b.repeatability.data[r0 * w + c0] +
                    fu * b.repeatability.data[r0 * w + c1]) +
        fv * ((1 - fu) * b.repeatability.data[r1 * w + c0] +
              fu * b.repeatability.data[r1 * w + c1]);
  }

  double cos_term = 0;
  std::size_t cos_patches = 0;
  for (int r0 = 0; r0 < h; r0 += N) {
    for (int c0 = 0; c0 < w; c0 += N) {
      double sxx = 0, syy = 0, sxy = 0;
      int cnt = 0;
      for (int r = r0; r < std::min(r0 + N, h); ++r) {
        for (int c = c0; c < std::min(c0 + N, w); ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * w + c;
          if (!flow.valid[i]) continue;
          sxx += a.repeatability.data[i] * a.repeatability.data[i];
          syy += warped[i] * warped[i];
          sxy += a.repeatability.data[i] * warped[i];
          ++cnt;
        }
      }
      if (cnt < 2 || sxx <= 0 || syy <= 0) continue;
      cos_term += 1.0 - sxy / std::sqrt(sxx * syy);
      ++cos_patches;
    }
  }
  if (cos_patches) cos_term /= cos_patches;

  const auto peaky = [&](const DenseFeatureMap& m) {
    double acc = 0;
    std::size_t cnt = 0;
    for (int r0 = 0; r0 < h; r0 += N) {
      for (int c0 = 0; c0 < w; c0 += N) {
        double mx = -1e300, sum = 0;
        int k = 0;
        for (int r = r0; r < std::min(r0 + N, h); ++r) {
          for (int c = c0; c < std::min(c0 + N, w); ++c) {
            const double v = m.repeatability.data[r * w + c];
            mx = std::max(mx, v);
            sum += v;
            ++k;
          }
        }
        if (!k) continue;
        acc += mx - sum / k;
        ++cnt;
      }
    }
    return cnt ? 1.0 - acc / cnt : 1.0;
  };
  const double peaky_term = 0.5 * (peaky(a) + peaky(b));

  double rel_term = 0;
  std::size_t queries = 0;
  const int M = cfg.ap_bins;
  const double delta = 2.0 / (M - 1);
  for (int r = 0; r < h; r += cfg.query_stride) {
    for (int c = 0; c < w; c += cfg.query_stride) {
      const std::size_t q = static_cast<std::size_t>(r) * w + c;
      if (!flow.valid[q]) continue;
      const int rb = std::clamp(
          static_cast<int>(std::floor(flow.target_v[q] + 0.5)), 0, h - 1);
      std::vector<double> sims, labels;
      double npos = 0;
      for (int cb = 0; cb < w; ++cb) {
        double s = 0;
        for (int d = 0; d < a.dim; ++d) {
          s += a.descriptors.data[d * n + q] *
               b.descriptors.data[d * n + rb * w + cb];
        }
        sims.push_back(s);
        double dist = std::abs(cb - flow.target_u[q]);
        dist = std::min(dist, w - dist);
        labels.push_back(dist <= cfg.positive_radius ? 1.0 : 0.0);
        npos += labels.back();
      }
      if (sims.size() < 2 || npos == 0) continue;
      std::vector<double> hh(M, 0), hp(M, 0);
      for (std::size_t k = 0; k < sims.size(); ++k) {
        for (int m = 0; m < M; ++m) {
          const double z = 1.0 - 2.0 * m / (M - 1);
          const double d = std::abs(sims[k] - z);
          if (d >= delta) continue;
          hh[m] += 1.0 - d / delta;
          hp[m] += labels[k] * (1.0 - d / delta);
        }
      }
      double H = 0, Hp = 0, ap = 0;
      for (int m = 0; m < M; ++m) {
        H += hh[m];
        Hp += hp[m];
        if (H > 1e-12) ap += Hp / H * hp[m];
      }
      ap /= npos;
      const double rel = a.reliability.data[q];
      rel_term += 1.0 - (ap * rel + cfg.ap_kappa * (1.0 - rel));
      ++queries;
    }
  }
  if (queries) rel_term /= queries;

  return cfg.weight_repeatability * cos_term +
         cfg.weight_peakiness * peaky_term +
         cfg.weight_reliability * rel_term;
}

}  // namespace

TEST_CASE("loss matches a straightforward reference on a tiny instance") {
  const DenseFeatureMap a = random_map(8, 16, 5, 61);
  const DenseFeatureMap b = random_map(8, 16, 5, 67);
  Rng rng(71);
  FlowMap flow(8, 16);
  for (std::size_t i = 0; i < flow.valid.size(); ++i) {
    if (rng.uniform() < 0.2) continue;
    flow.target_u[i] = rng.uniform(0.0, 16.0);
    flow.target_v[i] = rng.uniform(0.0, 7.0);
    flow.valid[i] = 1;
  }
  LossConfig cfg;
  cfg.patch_size = 4;
  cfg.ap_bins = 15;
  cfg.query_stride = 1;
  const LossBreakdown lb = loss(a, b, flow, {}, {}, cfg);
  const double ref = ref_loss(a, b, flow, cfg);
  CHECK(lb.total == doctest::Approx(ref).epsilon(1e-6));
  CHECK(lb.total >= 0.0);
}

// ---------------------------------------------------------------------------
// gradient checks (layer types)

TEST_CASE("conv gradient matches finite differences") {
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    ConvLayer layer;
    layer.in_channels = 2;
    layer.out_channels = 3;
    layer.kernel = trial % 2 ? 3 : 1;
    layer.dilation = trial % 3 == 0 ? 2 : 1;
    layer.weight = Eigen::MatrixXd::Zero(
        layer.out_channels,
        layer.in_channels * layer.kernel * layer.kernel);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = rng.uniform(-1, 1);
    }
    layer.bias = Eigen::VectorXd::Zero(layer.out_channels);
    for (Eigen::Index i = 0; i < 3; ++i) layer.bias(i) = rng.uniform(-1, 1);

    const Tensor input = random_tensor(2, 5, 7, rng);
    const Tensor proj = random_tensor(3, 5, 7, rng);
    const auto scalar = [&](const Tensor& in, const ConvLayer& l) {
      const Tensor out = conv_forward(in, l);
      double s = 0;
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        s += out.data[i] * proj.data[i];
      }
      return s;
    };

    Tensor d_input(2, 5, 7);
    ConvLayer d_layer = layer;
    d_layer.weight.setZero();
    d_layer.bias.setZero();
    conv_backward(input, layer, proj, &d_input, &d_layer);

    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < input.data.size(); ++i) {
      Tensor plus = input, minus = input;
      plus.data[i] += kFdEps;
      minus.data[i] -= kFdEps;
      numeric.push_back((scalar(plus, layer) - scalar(minus, layer)) /
                        (2 * kFdEps));
      analytic.push_back(d_input.data[i]);
    }
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      ConvLayer plus = layer, minus = layer;
      plus.weight.data()[i] += kFdEps;
      minus.weight.data()[i] -= kFdEps;
      numeric.push_back((scalar(input, plus) - scalar(input, minus)) /
                        (2 * kFdEps));
      analytic.push_back(d_layer.weight.data()[i]);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      ConvLayer plus = layer, minus = layer;
      plus.bias(i) += kFdEps;
      minus.bias(i) -= kFdEps;
      numeric.push_back((scalar(input, plus) - scalar(input, minus)) /
                        (2 * kFdEps));
      analytic.push_back(d_layer.bias(i));
    }
    CHECK(rel_error(analytic, numeric) < 1e-3);
  }
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(79);
  for (Activation act :
       {Activation::kRelu, Activation::kSoftplus, Activation::kTanh}) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor pre(1, 4, 6);
      for (double& v : pre.data) {
        // keep clear of the ReLU kink so the central difference is exact
        const double m = rng.uniform(0.05, 1.5);
        v = rng.uniform() < 0.5 ? -m : m;
      }
      const Tensor proj = random_tensor(1, 4, 6, rng);
      const Tensor d_in = activation_backward(pre, proj, act);
      std::vector<double> analytic, numeric;
      for (std::size_t i = 0; i < pre.data.size(); ++i) {
        Tensor plus = pre, minus = pre;
        plus.data[i] += kFdEps;
        minus.data[i] -= kFdEps;
        const Tensor fp = activation_forward(plus, act);
        const Tensor fm = activation_forward(minus, act);
        double s = 0;
        for (std::size_t k = 0; k < fp.data.size(); ++k) {
          s += (fp.data[k] - fm.data[k]) * proj.data[k];
        }
        numeric.push_back(s / (2 * kFdEps));
        analytic.push_back(d_in.data[i]);
      }
      CHECK(rel_error(analytic, numeric) < 1e-3);
    }
  }
}

// full network (smooth activation) + every loss term, weights and input
TEST_CASE("network and loss gradients match finite differences end to end") {
  Rng rng(83);
  NetworkConfig cfg;
  cfg.trunk = {{4, 3, 1}, {5, 3, 2}};
  cfg.descriptor_dim = 4;
  cfg.activation = Activation::kSoftplus;
  LossConfig lcfg;
  lcfg.patch_size = 3;
  lcfg.ap_bins = 11;
  lcfg.query_stride = 2;
  lcfg.positive_radius = 1.5;

  for (int trial = 0; trial < 3; ++trial) {
    const NetworkWeights w = init_weights(cfg, 100 + trial);
    const Tensor in_a = random_tensor(2, 6, 10, rng, -0.8, 0.8);
    const Tensor in_b = random_tensor(2, 6, 10, rng, -0.8, 0.8);
    FlowMap flow(6, 10);
    for (std::size_t i = 0; i < flow.valid.size(); ++i) {
      if (rng.uniform() < 0.25) continue;
      flow.target_u[i] = rng.uniform(0.0, 10.0);
      flow.target_v[i] = rng.uniform(0.0, 5.0);
      flow.valid[i] = 1;
    }

    const auto total = [&](const NetworkWeights& weights, const Tensor& ta,
                           const Tensor& tb) {
      const DenseFeatureMap ma = forward_tensor(ta, cfg, weights);
      const DenseFeatureMap mb = forward_tensor(tb, cfg, weights);
      return loss(ma, mb, flow, {}, {}, lcfg).total;
    };

    ForwardCache ca, cb;
    const DenseFeatureMap ma = forward_tensor(in_a, cfg, w, &ca);
    const DenseFeatureMap mb = forward_tensor(in_b, cfg, w, &cb);
    MapGradients ga, gb;
    loss(ma, mb, flow, {}, {}, lcfg, &ga, &gb);
    WeightGradients grads = WeightGradients::zeros_like(w);
    Tensor din_a(2, 6, 10), din_b(2, 6, 10);
    backward(cfg, w, ca, ma, ga, &grads, &din_a);
    backward(cfg, w, cb, mb, gb, &grads, &din_b);

    std::vector<double> analytic, numeric;
    // a sample of weights from every layer
    const auto probe_layer = [&](const ConvLayer& wl, const ConvLayer& gl,
                                 auto setter) {
      Rng pick(rng.next_u64());
      for (int k = 0; k < 6; ++k) {
        const std::size_t i = pick.index(wl.weight.size());
        NetworkWeights plus = w, minus = w;
        setter(plus, i, kFdEps);
        setter(minus, i, -kFdEps);
        numeric.push_back((total(plus, in_a, in_b) -
                           total(minus, in_a, in_b)) /
                          (2 * kFdEps));
        analytic.push_back(gl.weight.data()[i]);
      }
    };
    for (std::size_t li = 0; li < w.trunk.size(); ++li) {
      probe_layer(w.trunk[li], grads.trunk[li],
                  [li](NetworkWeights& nw, std::size_t i, double e) {
                    nw.trunk[li].weight.data()[i] += e;
                  });
    }
    probe_layer(w.desc_head, grads.desc_head,
                [](NetworkWeights& nw, std::size_t i, double e) {
                  nw.desc_head.weight.data()[i] += e;
                });
    probe_layer(w.rel_head, grads.rel_head,
                [](NetworkWeights& nw, std::size_t i, double e) {
                  nw.rel_head.weight.data()[i] += e;
                });
    probe_layer(w.rep_head, grads.rep_head,
                [](NetworkWeights& nw, std::size_t i, double e) {
                  nw.rep_head.weight.data()[i] += e;
                });
    // a sample of input pixels
    Rng pick(rng.next_u64());
    for (int k = 0; k < 10; ++k) {
      const std::size_t i = pick.index(in_a.data.size());
      Tensor plus = in_a, minus = in_a;
      plus.data[i] += kFdEps;
      minus.data[i] -= kFdEps;
      numeric.push_back(
          (total(w, plus, in_b) - total(w, minus, in_b)) / (2 * kFdEps));
      analytic.push_back(din_a.data[i]);
    }
    CHECK(rel_error(analytic, numeric) < 1e-3);
  }
}

// ---------------------------------------------------------------------------
// training loop

namespace {

std::vector<TrainSample> tiny_samples(int count, std::uint64_t seed) {
  std::vector<TrainSample> samples;
  for (int k = 0; k < count; ++k) {
    TrainSample s;
    s.image_a = random_scan(12, 24, seed + 2 * k);
    s.image_b = random_scan(12, 24, seed + 2 * k + 1);
    s.flow = identity_flow(12, 24);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

TEST_CASE("zero epochs returns the initial weights unchanged") {
  const NetworkConfig cfg = NetworkConfig::toy(4);
  const NetworkWeights init = init_weights(cfg, 7);
  TrainSchedule schedule;
  schedule.stage1_epochs = 0;
  schedule.stage2_epochs = 0;
  const TrainResult res = train(cfg, init, tiny_samples(2, 1), {}, schedule,
                                TrainConfig{}, 3);
  CHECK(res.steps == 0);
  CHECK(res.curve.empty());
  CHECK_FALSE(res.diverged);
  for (std::size_t i = 0; i < init.trunk.size(); ++i) {
    CHECK((res.weights.trunk[i].weight - init.trunk[i].weight).norm() == 0.0);
  }
}

TEST_CASE("training a few steps is deterministic and logs the curve") {
  const NetworkConfig cfg = NetworkConfig::toy(4);
  const NetworkWeights init = init_weights(cfg, 11);
  TrainSchedule schedule;
  schedule.stage1_epochs = 1;
  schedule.stage2_epochs = 1;
  TrainConfig tcfg;
  tcfg.batch_size = 2;
  tcfg.max_steps = 6;
  tcfg.loss.patch_size = 4;
  tcfg.loss.ap_bins = 11;
  tcfg.loss.query_stride = 3;
  const auto samples = tiny_samples(4, 21);
  const TrainResult r1 = train(cfg, init, samples, {}, schedule, tcfg, 5);
  const TrainResult r2 = train(cfg, init, samples, {}, schedule, tcfg, 5);
  REQUIRE(r1.curve.size() == r2.curve.size());
  CHECK(r1.steps == 4);  // two batches per stage
  for (std::size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].total == r2.curve[i].total);
  }
  for (std::size_t i = 0; i < r1.weights.trunk.size(); ++i) {
    CHECK((r1.weights.trunk[i].weight - r2.weights.trunk[i].weight).norm() ==
          0.0);
  }
}

TEST_CASE("a loss spike past ten times the initial value raises the signal") {
  // stage 1 sees a twin pair whose cosine term is near zero, stage 2 a pair
  // of unrelated scans; the jump crosses the 10x threshold and must stop
  // training with the flag set instead of being silently ignored
  const NetworkConfig cfg = NetworkConfig::toy(4);
  const NetworkWeights init = init_weights(cfg, 13);
  TrainSample twin;
  twin.image_a = random_scan(12, 24, 900);
  twin.image_b = twin.image_a;
  twin.flow = identity_flow(12, 24);
  TrainSample unrelated;
  unrelated.image_a = random_scan(12, 24, 901);
  unrelated.image_b = random_scan(12, 24, 902);
  unrelated.flow = identity_flow(12, 24);

  TrainSchedule schedule;
  schedule.stage1_epochs = 1;
  schedule.stage2_epochs = 1;
  TrainConfig tcfg;
  tcfg.learning_rate = 1e-9;
  tcfg.batch_size = 1;
  tcfg.augment.noise_variance = 1e-8;
  tcfg.augment.enable_offset_scale = false;
  tcfg.loss.patch_size = 4;
  tcfg.loss.weight_peakiness = 0.0;
  tcfg.loss.weight_reliability = 0.0;
  tcfg.loss.query_stride = 24;
  const TrainResult res =
      train(cfg, init, {twin}, {unrelated}, schedule, tcfg, 9);
  CHECK(res.diverged);
  CHECK(res.steps <= 3);  // stops at the offending step
}

TEST_CASE("two-stage schedule config is accepted") {
  TrainSchedule schedule;
  CHECK(schedule.stage1_epochs == 3);
  CHECK(schedule.stage2_epochs == 20);
}

TEST_CASE("weights file round trips") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "scanfeat_test_featnet";
  fs::create_directories(dir);
  const std::string path = (dir / "net.w3dl").string();

  NetworkConfig cfg = NetworkConfig::toy(6, Activation::kTanh);
  const NetworkWeights w = init_weights(cfg, 99);
  save_weights(path, cfg, w);
  const WeightsFile back = load_weights(path);
  CHECK(back.config.descriptor_dim == 6);
  CHECK(back.config.activation == Activation::kTanh);
  REQUIRE(back.config.trunk.size() == cfg.trunk.size());
  for (std::size_t i = 0; i < w.trunk.size(); ++i) {
    CHECK((back.weights.trunk[i].weight - w.trunk[i].weight)
              .cwiseAbs()
              .maxCoeff() < 1e-6);
  }
  // a forward pass with reloaded weights agrees to f32 precision
  const ScanImage img = random_scan(6, 12, 3);
  const DenseFeatureMap m1 = forward(img, cfg, w);
  const DenseFeatureMap m2 = forward(img, back.config, back.weights);
  for (std::size_t i = 0; i < m1.reliability.data.size(); ++i) {
    CHECK(m1.reliability.data[i] ==
          doctest::Approx(m2.reliability.data[i]).epsilon(1e-4));
  }
  fs::remove_all(dir);
}

TEST_CASE("crop_sample keeps flow consistent in the crop frames") {
  Rng rng(111);
  // unique pixel ids in the range channel expose what the crop copied
  ScanImage a(32, 96), b(32, 96);
  for (std::size_t i = 0; i < a.range.size(); ++i) {
    a.range[i] = static_cast<double>(i);
    b.range[i] = static_cast<double>(i) + 10000.0;
    a.valid[i] = b.valid[i] = 1;
  }
  // pure column-shift flow
  FlowMap flow(32, 96);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 96; ++c) {
      const std::size_t i = flow.idx(r, c);
      flow.target_u[i] = (c + 11) % 96;
      flow.target_v[i] = r;
      flow.valid[i] = 1;
    }
  }
  CropConfig cfg;
  cfg.height = 16;
  cfg.width = 40;
  cfg.min_valid_flow = 64;
  const auto sample = crop_sample(a, b, flow, cfg, rng);
  REQUIRE(sample.has_value());
  CHECK(sample->image_a.height == 16);
  CHECK(sample->image_a.width == 40);
  CHECK(sample->flow.valid_count() >= 64);
  // every kept target names the same underlying pixel of b
  std::size_t checked = 0;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 40; ++c) {
      const std::size_t i = sample->flow.idx(r, c);
      if (!sample->flow.valid[i]) continue;
      const auto src = static_cast<std::size_t>(sample->image_a.range[i]);
      const int sr = static_cast<int>(src / 96);
      const int sc = static_cast<int>(src % 96);
      const double expect_id = b.range[b.idx(sr, (sc + 11) % 96)];
      const int tu = static_cast<int>(std::llround(sample->flow.target_u[i]));
      const int tv = static_cast<int>(std::llround(sample->flow.target_v[i]));
      CHECK(sample->image_b.range[sample->image_b.idx(tv, tu)] == expect_id);
      ++checked;
    }
  }
  CHECK(checked >= 64);
}
