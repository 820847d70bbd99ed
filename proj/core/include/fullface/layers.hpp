#pragma once

// Fixed layer vocabulary of the gaze network. Every layer works on a single
// sample laid out channel-major (C, H, W); batching happens one level up.
// Forward passes are const, take an optional cache, and never mutate the
// layer, so one parameter set can be evaluated from many threads.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "fullface/tensor.hpp"

namespace fullface {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Output extent of a max-pooling window with ceiling rounding (the last
/// window may hang over the border and is clipped).
int pooled_extent(int extent, int kernel, int stride);
int conv_extent(int extent, int kernel, int stride, int pad);

/// Convolution + ReLU + optional max pooling.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int pool_kernel = 0;  // 0 disables pooling
  int pool_stride = 0;

  Tensor weight;  // [out, in * k * k]
  Tensor bias;    // [out]

  ConvLayer() = default;
  ConvLayer(int in, int out, int kernel, int stride, int pad, int pool_kernel, int pool_stride);

  struct Cache {
    RowMatrix columns;             // im2col of the input
    std::vector<std::uint8_t> active;  // ReLU mask, conv output layout
    std::vector<int> argmax;       // pooled output -> conv output index
    int in_h = 0, in_w = 0, conv_h = 0, conv_w = 0;
  };

  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const;
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients into `grad`; returns dL/dx unless
  /// `need_input_grad` is false.
  Tensor backward(const Cache& cache, const Tensor& dy, ConvLayer& grad,
                  bool need_input_grad = true) const;
};

/// Fully connected layer over the flattened input, optional ReLU.
struct DenseLayer {
  int in_features = 0;
  int out_features = 0;
  bool relu = true;

  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  DenseLayer() = default;
  DenseLayer(int in, int out, bool relu);

  struct Cache {
    Tensor input;
    std::vector<std::uint8_t> active;
  };

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& dy, DenseLayer& grad) const;
};

/// 1x1 convolution followed by ReLU: a per-pixel affine channel mix.
struct PointwiseConv {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  int in_channels() const { return static_cast<int>(weight.dim(1)); }
  int out_channels() const { return static_cast<int>(weight.dim(0)); }
};

/// How the weight-map gradient is formed in the backward pass.
enum class WeightMapGradient {
  channel_averaged,  // dW = (1/N) sum_c dV_c * U_c, used for training
  exact,             // dW = sum_c dV_c * U_c, the true chain-rule gradient
};

/// Three 1x1 convolutions, each followed by ReLU, reducing an N-channel
/// activation to one non-negative H x W map that rescales every channel.
struct SpatialWeightsLayer {
  PointwiseConv conv1;
  PointwiseConv conv2;
  PointwiseConv conv3;

  SpatialWeightsLayer() = default;
  SpatialWeightsLayer(int channels, int width1, int width2);

  int channels() const { return conv1.in_channels(); }

  struct Cache {
    Tensor input;                 // U
    RowMatrix hidden1, hidden2;   // post-ReLU activations
    RowMatrix weight_map;         // [1, H*W]
  };

  struct Output {
    Tensor weighted;    // V, [N, H, W]
    Tensor weight_map;  // W, [H, W]
  };

  Output forward(const Tensor& u, Cache* cache = nullptr) const;
  /// Full backward through the weight-map branch; returns dL/dU.
  Tensor backward(const Cache& cache, const Tensor& dv, SpatialWeightsLayer& grad,
                  WeightMapGradient mode) const;
};

/// Node-level spatial weighting: V_c = W (.) U_c for every channel.
SpatialWeightsLayer::Output spatial_weights_forward(const Tensor& u,
                                                    const SpatialWeightsLayer& layer);

struct SpatialWeightsGrad {
  Tensor input;       // dU = W (.) dV_c
  Tensor weight_map;  // dW
};

/// Gradients at the weighting node given the weight map.
SpatialWeightsGrad spatial_weights_backward(const Tensor& dv, const Tensor& u,
                                            const Tensor& weight_map,
                                            WeightMapGradient mode =
                                                WeightMapGradient::channel_averaged);

struct L1Result {
  double loss = 0.0;
  Tensor gradient;
};

/// Batch mean of sum |pred - target|, with subgradient sign(diff) / batch
/// (zero at ties).
L1Result l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace fullface
