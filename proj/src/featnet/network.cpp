#include "scanfeat/featnet/network.hpp"

#include <algorithm>
#include <cmath>

#include "scanfeat/core/rng.hpp"

namespace scanfeat::featnet {

namespace {

constexpr std::size_t kPixelBlock = 4096;
constexpr double kNormFloor = 1e-12;

ConvLayer make_layer(int in_ch, int out_ch, int kernel, int dilation) {
  ConvLayer l;
  l.in_channels = in_ch;
  l.out_channels = out_ch;
  l.kernel = kernel;
  l.dilation = dilation;
  l.weight = Eigen::MatrixXd::Zero(out_ch, in_ch * kernel * kernel);
  l.bias = Eigen::VectorXd::Zero(out_ch);
  return l;
}

void he_init(ConvLayer& l, Rng& rng) {
  const double stddev =
      std::sqrt(2.0 / static_cast<double>(l.weight.cols()));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      l.weight(r, c) = stddev * rng.normal();
    }
  }
}

// plane indices of the (kh, kw) tap for a run of output pixels;
// columns wrap, rows clamp
void tap_indices(int height, int width, int kernel, int dilation, int kh,
                 int kw, std::size_t p0, std::size_t count,
                 std::vector<std::int32_t>& out) {
  out.resize(count);
  const int half = kernel / 2;
  const int dr = (kh - half) * dilation;
  const int dc = (kw - half) * dilation;
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t p = p0 + j;
    const int r = static_cast<int>(p / width);
    const int c = static_cast<int>(p % width);
    const int sr = std::clamp(r + dr, 0, height - 1);
    int sc = (c + dc) % width;
    if (sc < 0) sc += width;
    out[j] = static_cast<std::int32_t>(sr) * width + sc;
  }
}

}  // namespace

NetworkWeights init_weights(const NetworkConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  NetworkWeights w;
  int in_ch = config.input_channels;
  for (const ConvSpec& spec : config.trunk) {
    ConvLayer l = make_layer(in_ch, spec.out_channels, spec.kernel,
                             spec.dilation);
    he_init(l, rng);
    w.trunk.push_back(std::move(l));
    in_ch = spec.out_channels;
  }
  w.desc_head = make_layer(in_ch, config.descriptor_dim, 1, 1);
  he_init(w.desc_head, rng);
  w.rel_head = make_layer(in_ch, 1, 1, 1);
  he_init(w.rel_head, rng);
  w.rep_head = make_layer(in_ch, 1, 1, 1);
  he_init(w.rep_head, rng);
  return w;
}

void check_weights(const NetworkConfig& config, const NetworkWeights& w) {
  if (w.trunk.size() != config.trunk.size()) {
    throw ShapeMismatch("trunk depth mismatch");
  }
  int in_ch = config.input_channels;
  for (std::size_t i = 0; i < w.trunk.size(); ++i) {
    const ConvLayer& l = w.trunk[i];
    const ConvSpec& s = config.trunk[i];
    if (l.in_channels != in_ch || l.out_channels != s.out_channels ||
        l.kernel != s.kernel || l.dilation != s.dilation ||
        l.weight.rows() != s.out_channels ||
        l.weight.cols() != in_ch * s.kernel * s.kernel ||
        l.bias.size() != s.out_channels) {
      throw ShapeMismatch("trunk layer " + std::to_string(i) +
                          " disagrees with config");
    }
    in_ch = s.out_channels;
  }
  const auto check_head = [&](const ConvLayer& l, int out, const char* name) {
    if (l.in_channels != in_ch || l.out_channels != out || l.kernel != 1 ||
        l.weight.rows() != out || l.weight.cols() != in_ch ||
        l.bias.size() != out) {
      throw ShapeMismatch(std::string(name) + " head disagrees with config");
    }
  };
  check_head(w.desc_head, config.descriptor_dim, "descriptor");
  check_head(w.rel_head, 1, "reliability");
  check_head(w.rep_head, 1, "repeatability");
}

Tensor conv_forward(const Tensor& input, const ConvLayer& layer) {
  if (input.channels != layer.in_channels) {
    throw ShapeMismatch("conv input channels mismatch");
  }
  const int k = layer.kernel;
  const std::size_t n = input.plane();
  Tensor out(layer.out_channels, input.height, input.width);
  Eigen::Map<Eigen::MatrixXd> out_m(out.data.data(), n, layer.out_channels);

  if (k == 1) {
    Eigen::Map<const Eigen::MatrixXd> in_m(input.data.data(), n,
                                           layer.in_channels);
    out_m.noalias() = in_m * layer.weight.transpose();
    out_m.rowwise() += layer.bias.transpose();
    return out;
  }

  std::vector<std::int32_t> idx;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(kPixelBlock),
                       layer.in_channels * k * k);
  for (std::size_t p0 = 0; p0 < n; p0 += kPixelBlock) {
    const std::size_t count = std::min(kPixelBlock, n - p0);
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        tap_indices(input.height, input.width, k, layer.dilation, kh, kw, p0,
                    count, idx);
        for (int ci = 0; ci < layer.in_channels; ++ci) {
          const double* plane = input.data.data() + ci * n;
          double* dst = cols.col(ci * k * k + kh * k + kw).data();
          for (std::size_t j = 0; j < count; ++j) dst[j] = plane[idx[j]];
        }
      }
    }
    out_m.middleRows(static_cast<Eigen::Index>(p0),
                     static_cast<Eigen::Index>(count))
        .noalias() = cols.topRows(static_cast<Eigen::Index>(count)) *
                     layer.weight.transpose();
  }
  out_m.rowwise() += layer.bias.transpose();
  return out;
}

void conv_backward(const Tensor& input, const ConvLayer& layer,
                   const Tensor& d_out, Tensor* d_input, ConvLayer* d_layer) {
  const int k = layer.kernel;
  const std::size_t n = input.plane();
  Eigen::Map<const Eigen::MatrixXd> dout_m(d_out.data.data(), n,
                                           layer.out_channels);
  if (d_layer) {
    d_layer->bias += dout_m.colwise().sum();
  }

  if (k == 1) {
    Eigen::Map<const Eigen::MatrixXd> in_m(input.data.data(), n,
                                           layer.in_channels);
    if (d_layer) {
      d_layer->weight.noalias() += dout_m.transpose() * in_m;
    }
    if (d_input) {
      Eigen::Map<Eigen::MatrixXd> din_m(d_input->data.data(), n,
                                        layer.in_channels);
      din_m.noalias() += dout_m * layer.weight;
    }
    return;
  }

  std::vector<std::int32_t> idx;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(kPixelBlock),
                       layer.in_channels * k * k);
  Eigen::MatrixXd dcols;
  for (std::size_t p0 = 0; p0 < n; p0 += kPixelBlock) {
    const std::size_t count = std::min(kPixelBlock, n - p0);
    const auto rows = static_cast<Eigen::Index>(count);
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        tap_indices(input.height, input.width, k, layer.dilation, kh, kw, p0,
                    count, idx);
        for (int ci = 0; ci < layer.in_channels; ++ci) {
          const double* plane = input.data.data() + ci * n;
          double* dst = cols.col(ci * k * k + kh * k + kw).data();
          for (std::size_t j = 0; j < count; ++j) dst[j] = plane[idx[j]];
        }
      }
    }
    const auto dout_block =
        dout_m.middleRows(static_cast<Eigen::Index>(p0), rows);
    if (d_layer) {
      d_layer->weight.noalias() +=
          dout_block.transpose() * cols.topRows(rows);
    }
    if (d_input) {
      dcols.noalias() = dout_block * layer.weight;
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          tap_indices(input.height, input.width, k, layer.dilation, kh, kw,
                      p0, count, idx);
          for (int ci = 0; ci < layer.in_channels; ++ci) {
            double* plane = d_input->data.data() + ci * n;
            const double* src = dcols.col(ci * k * k + kh * k + kw).data();
            for (std::size_t j = 0; j < count; ++j) plane[idx[j]] += src[j];
          }
        }
      }
    }
  }
}

Tensor activation_forward(const Tensor& pre, Activation act) {
  Tensor out = pre;
  switch (act) {
    case Activation::kRelu:
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSoftplus:
      for (double& v : out.data) {
        v = v > 30.0 ? v : std::log1p(std::exp(std::min(v, 30.0)));
      }
      break;
    case Activation::kTanh:
      for (double& v : out.data) v = std::tanh(v);
      break;
  }
  return out;
}

Tensor activation_backward(const Tensor& pre, const Tensor& d_post,
                           Activation act) {
  Tensor out = d_post;
  switch (act) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (pre.data[i] <= 0.0) out.data[i] = 0.0;
      }
      break;
    case Activation::kSoftplus:
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= 1.0 / (1.0 + std::exp(-pre.data[i]));
      }
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double t = std::tanh(pre.data[i]);
        out.data[i] *= 1.0 - t * t;
      }
      break;
  }
  return out;
}

namespace {

void sigmoid_inplace(Tensor& t) {
  for (double& v : t.data) v = 1.0 / (1.0 + std::exp(-v));
}

}  // namespace

DenseFeatureMap forward_tensor(const Tensor& input, const NetworkConfig& config,
                               const NetworkWeights& weights,
                               ForwardCache* cache) {
  check_weights(config, weights);
  if (input.channels != config.input_channels) {
    throw ShapeMismatch("input channel count mismatch");
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input = input;
  c.trunk_pre.clear();
  c.trunk_post.clear();

  const Tensor* cur = &c.input;
  for (const ConvLayer& layer : weights.trunk) {
    c.trunk_pre.push_back(conv_forward(*cur, layer));
    c.trunk_post.push_back(
        activation_forward(c.trunk_pre.back(), config.activation));
    cur = &c.trunk_post.back();
  }

  const std::size_t n = cur->plane();
  DenseFeatureMap map;
  map.height = cur->height;
  map.width = cur->width;
  map.dim = config.descriptor_dim;

  c.desc_pre = conv_forward(*cur, weights.desc_head);
  map.descriptors = c.desc_pre;
  c.desc_norm.assign(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int d = 0; d < map.dim; ++d) {
      const double v = c.desc_pre.data[d * n + p];
      s += v * v;
    }
    const double norm = std::sqrt(s);
    c.desc_norm[p] = norm;
    if (norm < kNormFloor) {
      // degenerate column: fall back to a fixed unit vector
      for (int d = 0; d < map.dim; ++d) {
        map.descriptors.data[d * n + p] = d == 0 ? 1.0 : 0.0;
      }
    } else {
      for (int d = 0; d < map.dim; ++d) {
        map.descriptors.data[d * n + p] /= norm;
      }
    }
  }

  c.rel_pre = conv_forward(*cur, weights.rel_head);
  map.reliability = c.rel_pre;
  sigmoid_inplace(map.reliability);
  c.rep_pre = conv_forward(*cur, weights.rep_head);
  map.repeatability = c.rep_pre;
  sigmoid_inplace(map.repeatability);
  return map;
}

DenseFeatureMap forward(const ScanImage& image, const NetworkConfig& config,
                        const NetworkWeights& weights, ForwardCache* cache) {
  if (config.input_channels != 2) {
    throw ShapeMismatch("scan images carry 2 channels");
  }
  Tensor input(2, image.height, image.width);
  const std::size_t n = input.plane();
  for (std::size_t i = 0; i < n; ++i) {
    if (!image.valid[i]) continue;
    input.data[i] = image.range[i];
    input.data[n + i] = image.intensity[i];
  }
  return forward_tensor(input, config, weights, cache);
}

WeightGradients WeightGradients::zeros_like(const NetworkWeights& w) {
  WeightGradients g;
  const auto zero_of = [](const ConvLayer& l) {
    ConvLayer z = l;
    z.weight.setZero();
    z.bias.setZero();
    return z;
  };
  for (const ConvLayer& l : w.trunk) g.trunk.push_back(zero_of(l));
  g.desc_head = zero_of(w.desc_head);
  g.rel_head = zero_of(w.rel_head);
  g.rep_head = zero_of(w.rep_head);
  return g;
}

void WeightGradients::add_scaled(const WeightGradients& other, double scale) {
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    trunk[i].weight += scale * other.trunk[i].weight;
    trunk[i].bias += scale * other.trunk[i].bias;
  }
  desc_head.weight += scale * other.desc_head.weight;
  desc_head.bias += scale * other.desc_head.bias;
  rel_head.weight += scale * other.rel_head.weight;
  rel_head.bias += scale * other.rel_head.bias;
  rep_head.weight += scale * other.rep_head.weight;
  rep_head.bias += scale * other.rep_head.bias;
}

void backward(const NetworkConfig& config, const NetworkWeights& weights,
              const ForwardCache& cache, const DenseFeatureMap& out,
              const MapGradients& grads, WeightGradients* weight_grads,
              Tensor* input_grad) {
  const Tensor& trunk_out =
      cache.trunk_post.empty() ? cache.input : cache.trunk_post.back();
  const std::size_t n = trunk_out.plane();
  Tensor d_trunk(trunk_out.channels, trunk_out.height, trunk_out.width);

  // descriptor head: through per-pixel L2 normalization
  Tensor d_desc_pre(out.dim, out.height, out.width);
  for (std::size_t p = 0; p < n; ++p) {
    const double norm = cache.desc_norm[p];
    if (norm < kNormFloor) continue;  // fallback branch has zero gradient
    double dot = 0.0;
    for (int d = 0; d < out.dim; ++d) {
      dot += out.descriptors.data[d * n + p] *
             grads.d_descriptors.data[d * n + p];
    }
    for (int d = 0; d < out.dim; ++d) {
      d_desc_pre.data[d * n + p] =
          (grads.d_descriptors.data[d * n + p] -
           out.descriptors.data[d * n + p] * dot) /
          norm;
    }
  }
  conv_backward(trunk_out, weights.desc_head, d_desc_pre, &d_trunk,
                weight_grads ? &weight_grads->desc_head : nullptr);

  // score heads: through the sigmoid
  Tensor d_rel_pre(1, out.height, out.width);
  Tensor d_rep_pre(1, out.height, out.width);
  for (std::size_t p = 0; p < n; ++p) {
    const double yr = out.reliability.data[p];
    d_rel_pre.data[p] = grads.d_reliability.data[p] * yr * (1.0 - yr);
    const double yp = out.repeatability.data[p];
    d_rep_pre.data[p] = grads.d_repeatability.data[p] * yp * (1.0 - yp);
  }
  conv_backward(trunk_out, weights.rel_head, d_rel_pre, &d_trunk,
                weight_grads ? &weight_grads->rel_head : nullptr);
  conv_backward(trunk_out, weights.rep_head, d_rep_pre, &d_trunk,
                weight_grads ? &weight_grads->rep_head : nullptr);

  // trunk, back to front
  Tensor d_cur = std::move(d_trunk);
  for (int i = static_cast<int>(weights.trunk.size()) - 1; i >= 0; --i) {
    const Tensor& layer_in = i == 0 ? cache.input : cache.trunk_post[i - 1];
    const Tensor d_pre =
        activation_backward(cache.trunk_pre[i], d_cur, config.activation);
    Tensor d_in(layer_in.channels, layer_in.height, layer_in.width);
    const bool want_input = i > 0 || input_grad != nullptr;
    conv_backward(layer_in, weights.trunk[i], d_pre,
                  want_input ? &d_in : nullptr,
                  weight_grads ? &weight_grads->trunk[i] : nullptr);
    d_cur = std::move(d_in);
  }
  if (input_grad) *input_grad = std::move(d_cur);
}

}  // namespace scanfeat::featnet
