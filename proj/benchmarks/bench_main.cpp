#include <benchmark/benchmark.h>

#include <array>
#include <random>

#include "fullface/crossval.hpp"
#include "fullface/evaluation.hpp"
#include "fullface/geometry.hpp"
#include "fullface/imaging.hpp"
#include "fullface/importance.hpp"
#include "fullface/layers.hpp"
#include "fullface/network.hpp"

using namespace fullface;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, 1);
  for (double& v : img.pixels()) v = u(rng);
  return img;
}

void BM_ConvForward(benchmark::State& state) {
  const Network net = init_parameters(ModelConfig::desk(), 1);
  const Tensor x = random_tensor({1, 64, 64}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.convs()[0].forward(x));
}
BENCHMARK(BM_ConvForward);

void BM_ConvBackward(benchmark::State& state) {
  const Network net = init_parameters(ModelConfig::desk(), 1);
  const ConvLayer& conv = net.convs()[0];
  const Tensor x = random_tensor({1, 64, 64}, 2);
  ConvLayer::Cache cache;
  const Tensor y = conv.forward(x, &cache);
  const Tensor dy = random_tensor(y.shape(), 3);
  ConvLayer grad = conv;
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(cache, dy, grad));
}
BENCHMARK(BM_ConvBackward);

void BM_SpatialWeightsForward(benchmark::State& state) {
  const Network net = init_parameters(ModelConfig::desk(), 1);
  const Tensor u = random_tensor(ModelConfig::desk().activation_shape(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.spatial()->forward(u));
}
BENCHMARK(BM_SpatialWeightsForward);

void BM_TrainStep(benchmark::State& state) {
  const ModelConfig c = ModelConfig::desk();
  const Network net = init_parameters(c, 1);
  Network grad(c);
  const Tensor x = random_tensor({1, 64, 64}, 5);
  const std::array<double, 2> target{0.1, -0.2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        net.accumulate_gradient(x, target, 1.0, grad, WeightMapGradient::channel_averaged));
  }
}
BENCHMARK(BM_TrainStep);

void BM_WarpPerspective(benchmark::State& state) {
  const Image img = random_image(128, 128, 6);
  Mat3 h = Mat3::Identity();
  h(0, 0) = 0.6;
  h(1, 1) = 0.55;
  h(0, 2) = -8.0;
  h(2, 0) = 1e-4;
  for (auto _ : state) benchmark::DoNotOptimize(warp_perspective(img, h, 64, 64));
}
BENCHMARK(BM_WarpPerspective);

void BM_Occlusion(benchmark::State& state) {
  const TrainedModel model{ModelConfig::desk(), init_parameters(ModelConfig::desk(), 1)};
  const ModelPredictor predictor(model);
  const Image img = random_image(64, 64, 7);
  const auto opts = OcclusionOptions::scaled_for(64);
  for (auto _ : state) benchmark::DoNotOptimize(occlusion_importance(predictor, img, {0.1, 0.0}, opts));
}
BENCHMARK(BM_Occlusion)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 3.0 * (i % 3) + n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans_1d(v, {3, 1}));
}
BENCHMARK(BM_KMeans)->Arg(100)->Arg(3000);

}  // namespace
BENCHMARK_MAIN();
