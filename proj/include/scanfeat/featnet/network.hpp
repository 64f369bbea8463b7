#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "scanfeat/errors.hpp"
#include "scanfeat/featnet/tensor.hpp"
#include "scanfeat/projection/scan_image.hpp"

namespace scanfeat::featnet {

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};

enum class Activation { kRelu, kSoftplus, kTanh };

struct ConvSpec {
  int out_channels = 0;
  int kernel = 3;
  int dilation = 1;
};

/// Fully convolutional trunk (stride 1 everywhere) with three 1x1 heads:
/// descriptors (L2-normalized per pixel), reliability and repeatability
/// (sigmoid-squashed). Columns are padded circularly, rows replicate.
struct NetworkConfig {
  int input_channels = 2;
  std::vector<ConvSpec> trunk = {
      {32, 3, 1}, {32, 3, 1}, {64, 3, 2}, {64, 3, 4}, {128, 3, 1}};
  int descriptor_dim = 32;
  Activation activation = Activation::kRelu;
  int patch_size = 8;
  int batch_size = 4;

  /// Small trunk for fast tests and smoke training.
  static NetworkConfig toy(int descriptor_dim = 8,
                           Activation act = Activation::kRelu) {
    NetworkConfig c;
    c.trunk = {{8, 3, 1}, {8, 3, 1}, {16, 3, 2}};
    c.descriptor_dim = descriptor_dim;
    c.activation = act;
    return c;
  }
};

/// One convolution: weight row o holds the (in, kh, kw) taps of output
/// channel o.
struct ConvLayer {
  Eigen::MatrixXd weight;  // out x (in * k * k)
  Eigen::VectorXd bias;    // out
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int dilation = 1;
};

struct NetworkWeights {
  std::vector<ConvLayer> trunk;
  ConvLayer desc_head;
  ConvLayer rel_head;
  ConvLayer rep_head;
};

NetworkWeights init_weights(const NetworkConfig& config, std::uint64_t seed);

/// Checks that weight shapes agree with the config; throws ShapeMismatch.
void check_weights(const NetworkConfig& config, const NetworkWeights& weights);

struct DenseFeatureMap {
  int height = 0;
  int width = 0;
  int dim = 0;
  Tensor descriptors;    // dim x H x W, unit columns
  Tensor reliability;    // 1 x H x W in [0,1]
  Tensor repeatability;  // 1 x H x W in [0,1]
};

/// Per-layer activations kept for the backward pass.
struct ForwardCache {
  Tensor input;
  std::vector<Tensor> trunk_pre;   // pre-activation per trunk layer
  std::vector<Tensor> trunk_post;  // post-activation
  Tensor desc_pre;
  std::vector<double> desc_norm;   // per pixel, before normalization
  Tensor rel_pre;
  Tensor rep_pre;
};

DenseFeatureMap forward(const ScanImage& image, const NetworkConfig& config,
                        const NetworkWeights& weights,
                        ForwardCache* cache = nullptr);

/// Same forward pass over an arbitrary input tensor (for gradient checks).
DenseFeatureMap forward_tensor(const Tensor& input, const NetworkConfig& config,
                               const NetworkWeights& weights,
                               ForwardCache* cache = nullptr);

/// Gradients with respect to the three output maps.
struct MapGradients {
  Tensor d_descriptors;
  Tensor d_reliability;
  Tensor d_repeatability;

  static MapGradients zeros_like(const DenseFeatureMap& m) {
    MapGradients g;
    g.d_descriptors = Tensor(m.dim, m.height, m.width);
    g.d_reliability = Tensor(1, m.height, m.width);
    g.d_repeatability = Tensor(1, m.height, m.width);
    return g;
  }
};

struct WeightGradients {
  std::vector<ConvLayer> trunk;
  ConvLayer desc_head;
  ConvLayer rel_head;
  ConvLayer rep_head;

  static WeightGradients zeros_like(const NetworkWeights& w);
  void add_scaled(const WeightGradients& other, double scale);
};

/// Backpropagates map gradients through heads and trunk, accumulating weight
/// gradients. Returns the gradient with respect to the input when
/// `input_grad` is non-null.
void backward(const NetworkConfig& config, const NetworkWeights& weights,
              const ForwardCache& cache, const DenseFeatureMap& out,
              const MapGradients& grads, WeightGradients* weight_grads,
              Tensor* input_grad = nullptr);

/// Low-level pieces, exposed for layer-wise gradient checking.
Tensor conv_forward(const Tensor& input, const ConvLayer& layer);
void conv_backward(const Tensor& input, const ConvLayer& layer,
                   const Tensor& d_out, Tensor* d_input, ConvLayer* d_layer);
Tensor activation_forward(const Tensor& pre, Activation act);
Tensor activation_backward(const Tensor& pre, const Tensor& d_post,
                           Activation act);

}  // namespace scanfeat::featnet
