#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fullface/imaging.hpp"
#include "fullface/layers.hpp"
#include "fullface/tensor.hpp"

namespace fullface {

struct ConvSpec {
  int channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  int pool_kernel = 0;
  int pool_stride = 0;

  bool operator==(const ConvSpec&) const = default;
};

/// Initialisation of the layers outside the spatial-weights branch.
enum class InitScheme {
  gaussian,  // N(0, 0.01^2), zero bias
  he,        // N(0, 2 / fan_in), zero bias
};

struct ModelConfig {
  int input_size = 64;  // square input
  int input_channels = 1;
  std::vector<ConvSpec> conv;
  bool spatial_weights = true;
  std::array<int, 2> spatial_widths{0, 0};  // 0 selects N / 8 (at least 1)
  std::vector<int> fc;
  int output_dim = 2;

  InitScheme init = InitScheme::gaussian;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;

  /// Small configuration used for the synthetic experiments (64 x 64 gray).
  static ModelConfig desk();
  /// AlexNet-style stack on 448 x 448 RGB input.
  static ModelConfig full_scale();

  void validate() const;
  /// Shape of the activation entering the spatial-weights stage.
  std::vector<std::size_t> activation_shape() const;
  std::array<int, 2> resolved_spatial_widths() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Parameterised network: conv trunk, optional spatial weights, dense head.
class Network {
 public:
  Network() = default;
  /// Allocates zero-valued parameters for `config`.
  explicit Network(const ModelConfig& config);
  /// Allocates only the convolution trunk (for shape inspection of large configs).
  static Network trunk_only(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  bool has_head() const { return !dense_.empty(); }

  /// Parameter tensors in a fixed order (trunk, spatial weights, head).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  /// Indices in parameters() belonging to the spatial-weights branch.
  std::vector<std::size_t> spatial_parameter_indices() const;

  std::vector<ConvLayer>& convs() { return convs_; }
  const std::vector<ConvLayer>& convs() const { return convs_; }
  std::optional<SpatialWeightsLayer>& spatial() { return spatial_; }
  const std::optional<SpatialWeightsLayer>& spatial() const { return spatial_; }
  std::vector<DenseLayer>& dense() { return dense_; }
  const std::vector<DenseLayer>& dense() const { return dense_; }

  /// Conv trunk output U for one [C, H, W] input.
  Tensor trunk_forward(const Tensor& input) const;

  struct Trace {
    Tensor activation;                  // U
    std::optional<Tensor> weight_map;   // W
    Tensor output;                      // raw network output
  };
  Trace forward_trace(const Tensor& input) const;

  /// Raw outputs for one [C, H, W] sample.
  Tensor forward(const Tensor& input) const;
  /// Raw outputs for a [B, C, H, W] batch; returns [B, output_dim].
  Tensor forward_batch(const Tensor& batch) const;

  /// ReLU on/off states and max-pool winners for one input; two inputs with
  /// equal patterns lie in the same linear region of the network.
  std::vector<int> activation_pattern(const Tensor& input) const;

  /// Returns the unscaled L1 loss of one sample and adds `weight` times its
  /// parameter gradients into `grad` (same architecture).
  double accumulate_gradient(const Tensor& input, std::span<const double> target, double weight,
                             Network& grad, WeightMapGradient mode) const;

  void set_zero();

 private:
  ModelConfig config_;
  std::vector<ConvLayer> convs_;
  std::optional<SpatialWeightsLayer> spatial_;
  std::vector<DenseLayer> dense_;
};

/// Seeded parameter draw. Spatial-weights conv1/conv2: N(0, 0.01^2), bias
/// 0.1; conv3: N(0, 0.001), bias 1; other layers per config.init.
Network init_parameters(const ModelConfig& config, std::uint64_t seed);

/// Converts an image to a [C, H, W] tensor with values shifted by -0.5.
Tensor image_to_tensor(const Image& img, int channels);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when no validation set was given
};

struct TrainingExample {
  Tensor input;
  std::array<double, 2> target{};
};

/// Trained network plus the target standardisation it was fitted with.
struct TrainedModel {
  ModelConfig config;
  Network network;
  std::array<double, 2> target_offset{0.0, 0.0};
  std::array<double, 2> target_scale{1.0, 1.0};
  std::vector<EpochLog> log;

  std::array<double, 2> predict(const Tensor& input) const;
};

/// Minibatch SGD with momentum on the L1 loss of standardised targets.
/// Deterministic for a given config.seed. Throws DivergenceError on a
/// non-finite loss or parameter.
TrainedModel train(const ModelConfig& config, const std::vector<TrainingExample>& train_set,
                   const std::vector<TrainingExample>& val_set = {});

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool spatial = false;  // compared as N * analytic
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  std::size_t refined = 0;  // entries whose step was shrunk to stay off a kink
  double max_rel_error = 0.0;          // exact-mode analytic vs finite differences
  double max_spatial_rel_error = 0.0;  // N * channel-averaged analytic vs finite differences
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Times the step is divided by 10 when +/- epsilon changes the activation pattern.
  int max_refinements = 4;
  std::size_t max_entries_per_tensor = 48;
  std::uint64_t seed = 0;
};

/// Central finite differences of the single-sample L1 loss against the
/// analytic gradients, for every parameter tensor. A step that moves any
/// ReLU or max-pool decision is shrunk, so differences are taken inside one
/// linear region.
GradCheckReport grad_check(const Network& net, const Tensor& input,
                           std::span<const double> target, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric);

/// grad_check on a freshly initialised network with a random input in
/// [-0.5, 0.5] and a random target kept away from the l1 kink.
GradCheckReport random_grad_check(const ModelConfig& config, std::uint64_t seed,
                                  const GradCheckOptions& options = {});

}  // namespace fullface
