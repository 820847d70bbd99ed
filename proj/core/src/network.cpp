#include "fullface/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fullface/error.hpp"

namespace fullface {

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.input_size = 64;
  c.input_channels = 1;
  c.conv = {{8, 5, 2, 2, 2, 2}, {16, 3, 1, 1, 2, 2}, {16, 3, 1, 1, 0, 0}};
  c.spatial_weights = true;
  c.fc = {64};
  c.init = InitScheme::he;
  return c;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.input_size = 448;
  c.input_channels = 3;
  c.conv = {{96, 11, 4, 0, 3, 2},
            {256, 5, 1, 2, 3, 2},
            {384, 3, 1, 1, 0, 0},
            {384, 3, 1, 1, 0, 0},
            {256, 3, 1, 1, 3, 2}};
  c.spatial_weights = true;
  c.fc = {4096, 4096};
  return c;
}

void ModelConfig::validate() const {
  if (output_dim != 2) throw ValidationError("model output_dim must be 2");
  if (input_size <= 0) throw ValidationError("model input_size must be positive");
  if (input_channels != 1 && input_channels != 3) {
    throw ValidationError("model input_channels must be 1 or 3");
  }
  if (conv.empty()) throw ValidationError("model needs at least one conv layer");
  for (const auto& c : conv) {
    if (c.channels <= 0 || c.kernel <= 0 || c.stride <= 0 || c.pad < 0) {
      throw ValidationError("invalid conv layer specification");
    }
    if (c.pool_kernel < 0 || (c.pool_kernel > 0 && c.pool_stride <= 0)) {
      throw ValidationError("invalid pooling specification");
    }
  }
  for (int w : fc) {
    if (w <= 0) throw ValidationError("fully connected widths must be positive");
  }
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must be in [0, 1)");
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (epochs < 0) throw ValidationError("epochs must be non-negative");
  activation_shape();
}

std::vector<std::size_t> ModelConfig::activation_shape() const {
  std::vector<std::size_t> shape{static_cast<std::size_t>(input_channels),
                                 static_cast<std::size_t>(input_size),
                                 static_cast<std::size_t>(input_size)};
  int in = input_channels;
  for (const auto& c : conv) {
    ConvLayer layer(in, c.channels, c.kernel, c.stride, c.pad, c.pool_kernel, c.pool_stride);
    shape = layer.output_shape(shape);
    in = c.channels;
  }
  return shape;
}

std::array<int, 2> ModelConfig::resolved_spatial_widths() const {
  const int n = conv.back().channels;
  const int fallback = std::max(1, n / 8);
  return {spatial_widths[0] > 0 ? spatial_widths[0] : fallback,
          spatial_widths[1] > 0 ? spatial_widths[1] : fallback};
}

namespace {

std::vector<ConvLayer> make_trunk(const ModelConfig& config) {
  std::vector<ConvLayer> convs;
  int in = config.input_channels;
  for (const auto& c : config.conv) {
    convs.emplace_back(in, c.channels, c.kernel, c.stride, c.pad, c.pool_kernel, c.pool_stride);
    in = c.channels;
  }
  return convs;
}

}  // namespace

Network::Network(const ModelConfig& config) : config_(config), convs_(make_trunk(config)) {
  config.validate();
  const auto u = config.activation_shape();
  if (config.spatial_weights) {
    const auto widths = config.resolved_spatial_widths();
    spatial_.emplace(static_cast<int>(u[0]), widths[0], widths[1]);
  }
  int in = static_cast<int>(shape_volume(u));
  for (int w : config.fc) {
    dense_.emplace_back(in, w, true);
    in = w;
  }
  dense_.emplace_back(in, config.output_dim, false);
}

Network Network::trunk_only(const ModelConfig& config) {
  config.validate();
  Network net;
  net.config_ = config;
  net.convs_ = make_trunk(config);
  return net;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& c : convs_) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  if (spatial_) {
    for (PointwiseConv* p : {&spatial_->conv1, &spatial_->conv2, &spatial_->conv3}) {
      out.push_back(&p->weight);
      out.push_back(&p->bias);
    }
  }
  for (auto& d : dense_) {
    out.push_back(&d.weight);
    out.push_back(&d.bias);
  }
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  auto mut = const_cast<Network*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    names.push_back("conv" + std::to_string(i + 1) + ".weight");
    names.push_back("conv" + std::to_string(i + 1) + ".bias");
  }
  if (spatial_) {
    for (int i = 1; i <= 3; ++i) {
      names.push_back("spatial.conv" + std::to_string(i) + ".weight");
      names.push_back("spatial.conv" + std::to_string(i) + ".bias");
    }
  }
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    const std::string base = i + 1 == dense_.size() ? "output" : "fc" + std::to_string(i + 1);
    names.push_back(base + ".weight");
    names.push_back(base + ".bias");
  }
  return names;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

std::vector<std::size_t> Network::spatial_parameter_indices() const {
  if (!spatial_) return {};
  const std::size_t first = 2 * convs_.size();
  return {first, first + 1, first + 2, first + 3, first + 4, first + 5};
}

void Network::set_zero() {
  for (Tensor* t : parameters()) t->fill(0.0);
}

namespace {

void check_input(const ModelConfig& config, const Tensor& input) {
  const std::size_t s = static_cast<std::size_t>(config.input_size);
  if (input.rank() != 3 || input.dim(0) != static_cast<std::size_t>(config.input_channels) ||
      input.dim(1) != s || input.dim(2) != s) {
    throw ShapeError("network input " + input.shape_string() + " does not match config [" +
                     std::to_string(config.input_channels) + "x" + std::to_string(s) + "x" +
                     std::to_string(s) + "]");
  }
}

}  // namespace

Tensor Network::trunk_forward(const Tensor& input) const {
  check_input(config_, input);
  Tensor x = input;
  for (const auto& c : convs_) x = c.forward(x);
  return x;
}

Network::Trace Network::forward_trace(const Tensor& input) const {
  if (!has_head()) throw ShapeError("network was built without a regression head");
  Trace trace;
  trace.activation = trunk_forward(input);
  Tensor x = trace.activation;
  if (spatial_) {
    auto sw = spatial_->forward(x);
    trace.weight_map = std::move(sw.weight_map);
    x = std::move(sw.weighted);
  }
  for (const auto& d : dense_) x = d.forward(x);
  trace.output = std::move(x);
  return trace;
}

Tensor Network::forward(const Tensor& input) const { return forward_trace(input).output; }

Tensor Network::forward_batch(const Tensor& batch) const {
  if (batch.rank() != 4) throw ShapeError("batch must be [B, C, H, W], got " + batch.shape_string());
  const std::size_t b = batch.dim(0);
  const std::size_t per = batch.size() / std::max<std::size_t>(b, 1);
  Tensor out({b, static_cast<std::size_t>(config_.output_dim)});
  for (std::size_t i = 0; i < b; ++i) {
    Tensor one({batch.dim(1), batch.dim(2), batch.dim(3)},
               std::vector<double>(batch.data() + i * per, batch.data() + (i + 1) * per));
    const Tensor y = forward(one);
    for (std::size_t j = 0; j < y.size(); ++j) out.at(i, j) = y[j];
  }
  return out;
}

std::vector<int> Network::activation_pattern(const Tensor& input) const {
  check_input(config_, input);
  std::vector<int> pattern;
  Tensor x = input;
  for (const auto& c : convs_) {
    ConvLayer::Cache cache;
    x = c.forward(x, &cache);
    pattern.insert(pattern.end(), cache.active.begin(), cache.active.end());
    pattern.insert(pattern.end(), cache.argmax.begin(), cache.argmax.end());
  }
  if (spatial_) {
    SpatialWeightsLayer::Cache cache;
    x = spatial_->forward(x, &cache).weighted;
    for (const RowMatrix* m : {&cache.hidden1, &cache.hidden2, &cache.weight_map}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) pattern.push_back(m->data()[i] > 0.0 ? 1 : 0);
    }
  }
  for (const auto& d : dense_) {
    DenseLayer::Cache cache;
    x = d.forward(x, &cache);
    pattern.insert(pattern.end(), cache.active.begin(), cache.active.end());
  }
  return pattern;
}

double Network::accumulate_gradient(const Tensor& input, std::span<const double> target,
                                    double weight, Network& grad, WeightMapGradient mode) const {
  if (!has_head()) throw ShapeError("network was built without a regression head");
  std::vector<ConvLayer::Cache> conv_caches(convs_.size());
  check_input(config_, input);
  Tensor x = input;
  for (std::size_t i = 0; i < convs_.size(); ++i) x = convs_[i].forward(x, &conv_caches[i]);
  const std::vector<std::size_t> u_shape = x.shape();
  SpatialWeightsLayer::Cache sw_cache;
  if (spatial_) x = spatial_->forward(x, &sw_cache).weighted;
  std::vector<DenseLayer::Cache> dense_caches(dense_.size());
  for (std::size_t i = 0; i < dense_.size(); ++i) x = dense_[i].forward(x, &dense_caches[i]);

  if (target.size() != x.size()) throw ShapeError("target size does not match network output");
  double loss = 0.0;
  Tensor dy(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - target[i];
    loss += std::abs(d);
    dy[i] = d > 0.0 ? weight : (d < 0.0 ? -weight : 0.0);
  }

  for (std::size_t i = dense_.size(); i-- > 0;) {
    dy = dense_[i].backward(dense_caches[i], dy, grad.dense_[i]);
  }
  dy = dy.reshaped(u_shape);
  if (spatial_) dy = spatial_->backward(sw_cache, dy, *grad.spatial_, mode);
  for (std::size_t i = convs_.size(); i-- > 0;) {
    dy = convs_[i].backward(conv_caches[i], dy, grad.convs_[i], i > 0);
  }
  return loss;
}

Network init_parameters(const ModelConfig& config, std::uint64_t seed) {
  Network net(config);
  std::mt19937_64 rng(seed);
  auto gaussian = [&](Tensor& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.values()) v = dist(rng);
  };
  auto other_std = [&](std::size_t fan_in) {
    return config.init == InitScheme::gaussian ? 0.01 : std::sqrt(2.0 / fan_in);
  };
  for (auto& c : net.convs()) {
    gaussian(c.weight, other_std(c.weight.dim(1)));
    c.bias.fill(0.0);
  }
  if (auto& sw = net.spatial()) {
    gaussian(sw->conv1.weight, 0.01);
    sw->conv1.bias.fill(0.1);
    gaussian(sw->conv2.weight, 0.01);
    sw->conv2.bias.fill(0.1);
    gaussian(sw->conv3.weight, std::sqrt(0.001));
    sw->conv3.bias.fill(1.0);
  }
  for (auto& d : net.dense()) {
    gaussian(d.weight, other_std(d.weight.dim(1)));
    d.bias.fill(0.0);
  }
  return net;
}

Tensor image_to_tensor(const Image& img, int channels) {
  const Image src = (channels == 1 && img.channels() != 1) ? img.to_gray() : img;
  if (src.channels() != channels) {
    throw ShapeError("image has " + std::to_string(src.channels()) + " channels, model expects " +
                     std::to_string(channels));
  }
  const std::size_t w = static_cast<std::size_t>(src.width());
  const std::size_t h = static_cast<std::size_t>(src.height());
  Tensor t({static_cast<std::size_t>(channels), h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        t.at(static_cast<std::size_t>(c), y, x) =
            src.at(static_cast<int>(x), static_cast<int>(y), c) - 0.5;
      }
    }
  }
  return t;
}

std::array<double, 2> TrainedModel::predict(const Tensor& input) const {
  const Tensor y = network.forward(input);
  return {y[0] * target_scale[0] + target_offset[0], y[1] * target_scale[1] + target_offset[1]};
}

}  // namespace fullface
