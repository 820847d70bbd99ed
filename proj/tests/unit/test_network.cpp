#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "fullface/error.hpp"
#include "fullface/model_io.hpp"
#include "fullface/network.hpp"
#include "fullface/synth.hpp"
#include "support.hpp"

using namespace fullface;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Spatial-weights layer whose map equals relu(U channel 0).
SpatialWeightsLayer passthrough_layer(int channels) {
  SpatialWeightsLayer layer(channels, 1, 1);
  layer.conv1.weight.fill(0.0);
  layer.conv1.weight[0] = 1.0;
  layer.conv1.bias.fill(0.0);
  layer.conv2.weight.fill(1.0);
  layer.conv2.bias.fill(0.0);
  layer.conv3.weight.fill(1.0);
  layer.conv3.bias.fill(0.0);
  return layer;
}

double sample_std(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / v.size());
}

std::vector<TrainingExample> synthetic_examples(int persons, int per_person) {
  SynthConfig cfg;
  cfg.persons = persons;
  cfg.samples_per_person = per_person;
  cfg.image_size = 64;
  cfg.focal = 150.0;
  std::vector<TrainingExample> out;
  for (int p = 1; p <= persons; ++p) {
    for (int i = 0; i < per_person; ++i) {
      const SynthItem item = synth_sample(cfg, p, i);
      const GazeAngles g = vector_to_angles(item.sample.gaze_vector());
      out.push_back({image_to_tensor(item.image, 1), {g.yaw, g.pitch}});
    }
  }
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::desk();
  c.input_size = 16;
  c.conv = {{4, 3, 1, 1, 2, 2}, {6, 3, 1, 1, 0, 0}};
  c.fc = {8};
  return c;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("tensor basics") {
  Tensor t({2, 3, 4}, 1.5);
  CHECK(t.size() == 24);
  CHECK(t.shape_string() == "[2x3x4]");
  t.at(1, 2, 3) = -2.0;
  CHECK(t[23] == -2.0);
  CHECK(t.reshaped({6, 4}).at(5, 3) == -2.0);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("spatial weights forward examples") {
  Tensor u({2, 2, 2}, std::vector<double>{1, 2, 0, 0.5, 3, -1, 4, 2});
  const auto out = passthrough_layer(2).forward(u);
  CHECK(out.weight_map.values()[0] == 1.0);
  CHECK(out.weight_map.values()[1] == 2.0);
  CHECK(out.weight_map.values()[2] == 0.0);
  CHECK(out.weight_map.values()[3] == 0.5);
  const std::vector<double> expected{1, 4, 0, 0.25, 3, -2, 0, 1};
  for (std::size_t i = 0; i < 8; ++i) CHECK(out.weighted[i] == doctest::Approx(expected[i]));

  SpatialWeightsLayer ones(3, 2, 2);
  ones.conv3.weight.fill(0.0);
  ones.conv3.bias.fill(1.0);
  const Tensor r = random_tensor({3, 4, 5}, 1);
  CHECK(ones.forward(r).weighted == r);

  SpatialWeightsLayer zeros = ones;
  zeros.conv3.bias.fill(-1.0);
  const auto zero_out = zeros.forward(r);
  for (double v : zero_out.weighted.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(ones.forward(random_tensor({2, 4, 5}, 2)), ShapeError);
}

TEST_CASE("spatial weights forward equals per-element multiplication") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SpatialWeightsLayer layer(8, 3, 2);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    for (auto* conv : {&layer.conv1, &layer.conv2, &layer.conv3}) {
      for (double& v : conv->weight.values()) v = n(rng);
      for (double& v : conv->bias.values()) v = n(rng) + 0.3;
    }
    const Tensor u = random_tensor({8, 5, 6}, seed + 100);
    const auto out = spatial_weights_forward(u, layer);
    for (std::size_t c = 0; c < 8; ++c) {
      for (std::size_t y = 0; y < 5; ++y) {
        for (std::size_t x = 0; x < 6; ++x) {
          const double w = out.weight_map.at(y, x);
          CHECK(w >= 0.0);
          CHECK(out.weighted.at(c, y, x) == w * u.at(c, y, x));
        }
      }
    }
  }
}

TEST_CASE("spatial weights backward examples") {
  const Tensor u({2, 1, 1}, std::vector<double>{2, 4});
  const Tensor dv({2, 1, 1}, std::vector<double>{1, 1});
  const double w = 0.7;
  const Tensor map({1, 1}, std::vector<double>{w});
  const auto g = spatial_weights_backward(dv, u, map);
  CHECK(g.weight_map[0] == doctest::Approx(3.0));
  CHECK(g.input[0] == doctest::Approx(w));
  CHECK(g.input[1] == doctest::Approx(w));
  CHECK(spatial_weights_backward(dv, u, map, WeightMapGradient::exact).weight_map[0] ==
        doctest::Approx(6.0));

  const auto z = spatial_weights_backward(Tensor({2, 1, 1}), u, map);
  CHECK(z.weight_map[0] == 0.0);
  CHECK(z.input[0] == 0.0);

  const Tensor u1 = random_tensor({1, 3, 3}, 4);
  const Tensor dv1 = random_tensor({1, 3, 3}, 5);
  const Tensor m1 = random_tensor({3, 3}, 6, 0.0, 2.0);
  CHECK(spatial_weights_backward(dv1, u1, m1).weight_map ==
        spatial_weights_backward(dv1, u1, m1, WeightMapGradient::exact).weight_map);

  CHECK_THROWS_AS(spatial_weights_backward(dv, u, Tensor({2, 2})), ShapeError);
}

TEST_CASE("spatial weights node gradients against finite differences") {
  const std::size_t n = 5;
  const Tensor u = random_tensor({n, 3, 4}, 7);
  const Tensor dv = random_tensor({n, 3, 4}, 8);
  const Tensor map = random_tensor({3, 4}, 9, 0.1, 2.0);
  // Scalar probe L = sum(dv * (map . u)), so dL/dV = dv.
  auto probe = [&](const Tensor& uu, const Tensor& mm) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t i = 0; i < 12; ++i) s += dv[c * 12 + i] * mm[i] * uu[c * 12 + i];
    }
    return s;
  };
  const auto g = spatial_weights_backward(dv, u, map);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < u.size(); ++i) {
    Tensor a = u, b = u;
    a[i] += eps;
    b[i] -= eps;
    const double fd = (probe(a, map) - probe(b, map)) / (2 * eps);
    CHECK(relative_error(g.input[i], fd) < 1e-3);
  }
  for (std::size_t i = 0; i < map.size(); ++i) {
    Tensor a = map, b = map;
    a[i] += eps;
    b[i] -= eps;
    const double fd = (probe(u, a) - probe(u, b)) / (2 * eps);
    CHECK(relative_error(n * g.weight_map[i], fd) < 1e-3);
    CHECK(relative_error(g.weight_map[i], fd) > 0.5);
  }
}

TEST_CASE("channel-averaged training gradient is the exact one divided by N") {
  const ModelConfig c = ModelConfig::desk();
  const Network net = init_parameters(c, 3);
  const Tensor x = random_tensor({1, 64, 64}, 10, -0.5, 0.5);
  const std::array<double, 2> t{0.7, -1.3};
  Network exact(c), averaged(c);
  net.accumulate_gradient(x, t, 1.0, exact, WeightMapGradient::exact);
  net.accumulate_gradient(x, t, 1.0, averaged, WeightMapGradient::channel_averaged);
  const double channels = static_cast<double>(c.conv.back().channels);
  const auto& e3 = exact.spatial()->conv3.weight;
  const auto& a3 = averaged.spatial()->conv3.weight;
  for (std::size_t i = 0; i < e3.size(); ++i) {
    CHECK(a3[i] * channels == doctest::Approx(e3[i]).epsilon(1e-12));
  }
  CHECK(averaged.dense().back().weight == exact.dense().back().weight);
}

TEST_CASE("full-scale trunk produces a 256x13x13 activation") {
  const ModelConfig c = ModelConfig::full_scale();
  CHECK(c.activation_shape() == std::vector<std::size_t>{256, 13, 13});
  const Network trunk = Network::trunk_only(c);
  const Tensor u = trunk.trunk_forward(random_tensor({3, 448, 448}, 11, -0.5, 0.5));
  CHECK(u.shape() == std::vector<std::size_t>{256, 13, 13});
  CHECK(c.resolved_spatial_widths() == std::array<int, 2>{32, 32});
}

TEST_CASE("forward pass contracts") {
  const ModelConfig c = ModelConfig::desk();
  Network zero(c);
  zero.dense().back().bias[0] = 0.25;
  zero.dense().back().bias[1] = -0.75;
  const Tensor out = zero.forward(random_tensor({1, 64, 64}, 12));
  CHECK(out[0] == 0.25);
  CHECK(out[1] == -0.75);

  const Network net = init_parameters(c, 4);
  const Tensor batch = random_tensor({5, 1, 64, 64}, 13, -0.5, 0.5);
  const Tensor y = net.forward_batch(batch);
  CHECK(y.shape() == std::vector<std::size_t>{5, 2});
  CHECK(y.all_finite());
  const Tensor single = net.forward(random_tensor({1, 64, 64}, 13, -0.5, 0.5));
  CHECK(single.size() == 2);

  const auto trace = net.forward_trace(random_tensor({1, 64, 64}, 14, -0.5, 0.5));
  REQUIRE(trace.weight_map.has_value());
  for (double v : trace.weight_map->values()) CHECK(v >= 0.0);

  CHECK_THROWS_AS(net.forward(random_tensor({1, 32, 32}, 15)), ShapeError);
  CHECK_THROWS_AS(net.forward_batch(random_tensor({1, 64, 64}, 15)), ShapeError);
}

TEST_CASE("l1 loss") {
  const Tensor p({1, 2}, std::vector<double>{1.3, -0.4});
  CHECK(l1_loss(p, p).loss == 0.0);
  const Tensor t({1, 2}, std::vector<double>{1.0, 0.0});
  CHECK(l1_loss(p, t).loss == doctest::Approx(0.7));
  const Tensor p2({2, 2}, std::vector<double>{2, 2, 0, 1});
  const Tensor t2({2, 2}, std::vector<double>{1, 1, 0, 3});
  const auto r = l1_loss(p2, t2);
  CHECK(r.loss == doctest::Approx(2.0));
  CHECK(r.gradient[0] == 0.5);
  CHECK(r.gradient[1] == 0.5);
  CHECK(r.gradient[2] == 0.0);
  CHECK(r.gradient[3] == -0.5);
  CHECK_THROWS_AS(l1_loss(p, p2), ShapeError);
}

TEST_CASE("parameter initialisation") {
  const ModelConfig c = ModelConfig::desk();
  const Network a = init_parameters(c, 21);
  const Network b = init_parameters(c, 21);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  CHECK_FALSE(*init_parameters(c, 22).parameters()[0] == *pa[0]);

  const auto& sw = *a.spatial();
  for (double v : sw.conv3.bias.values()) CHECK(v == 1.0);
  for (double v : sw.conv1.bias.values()) CHECK(v == 0.1);
  for (double v : sw.conv2.bias.values()) CHECK(v == 0.1);
  for (double v : a.convs()[0].bias.values()) CHECK(v == 0.0);

  ModelConfig wide;
  wide.input_size = 4;
  wide.conv = {{1024, 3, 1, 1, 0, 0}};
  wide.spatial_widths = {128, 128};
  wide.fc = {};
  const Network w = init_parameters(wide, 5);
  CHECK(w.spatial()->conv1.weight.size() >= 100000);
  CHECK(sample_std(w.spatial()->conv1.weight.values()) == doctest::Approx(0.01).epsilon(0.05));
  CHECK(sample_std(w.spatial()->conv3.weight.values()) ==
        doctest::Approx(std::sqrt(0.001)).epsilon(0.2));
  CHECK(sample_std(w.convs()[0].weight.values()) == doctest::Approx(0.01).epsilon(0.05));

  ModelConfig he = wide;
  he.init = InitScheme::he;
  const double fan_in = 9.0;
  CHECK(sample_std(init_parameters(he, 5).convs()[0].weight.values()) ==
        doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.05));
}

TEST_CASE("gradient check on random desk models") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto report = random_grad_check(ModelConfig::desk(), seed);
    CHECK(report.max_rel_error < 1e-3);
    CHECK(report.max_spatial_rel_error < 1e-3);
    CHECK(report.groups.size() == Network(ModelConfig::desk()).parameters().size());
  }
}

TEST_CASE("central differences converge at second order") {
  // A smooth toy loss exposes the O(eps^2) error of the scheme grad_check uses.
  auto f = [](double w) { return w * w * w + 0.5 * w * w; };
  const double w = 0.8;
  const double exact = 3 * w * w + w;
  auto central = [&](double eps) { return (f(w + eps) - f(w - eps)) / (2 * eps); };
  const double e1 = std::abs(central(1e-2) - exact);
  const double e2 = std::abs(central(5e-3) - exact);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.01));
  CHECK(relative_error(exact, central(1e-4)) < 1e-7);
}

TEST_CASE("training memorises a single sample") {
  ModelConfig c = tiny_config();
  c.epochs = 300;
  c.batch_size = 1;
  c.learning_rate = 0.03;
  c.momentum = 0.0;
  const std::vector<TrainingExample> one{{random_tensor({1, 16, 16}, 16, -0.5, 0.5), {0.3, -0.2}}};
  const TrainedModel m = train(c, one);
  REQUIRE(m.log.size() == 300);
  CHECK(m.log.front().train_loss > 0.1);
  CHECK(m.log.back().train_loss < 1e-3);
  const auto pred = m.predict(one[0].input);
  CHECK(std::abs(pred[0] - 0.3) < 1e-3);
  CHECK(std::abs(pred[1] + 0.2) < 1e-3);
}

TEST_CASE("training is deterministic and lowers the loss") {
  ModelConfig c = ModelConfig::desk();
  c.epochs = 4;
  const auto data = synthetic_examples(2, 40);
  const TrainedModel a = train(c, data, data);
  const TrainedModel b = train(c, data, data);
  REQUIRE(a.log.size() == 4);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_loss == b.log[i].val_loss);
  }
  const auto pa = a.network.parameters(), pb = b.network.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  CHECK(a.log.back().train_loss < a.log.front().train_loss);

  CHECK_THROWS_AS(train(c, {}), ValidationError);
  ModelConfig hot = c;
  hot.learning_rate = 1e300;
  CHECK_THROWS_AS(train(hot, data), DivergenceError);
}

TEST_CASE("config validation") {
  ModelConfig c = ModelConfig::desk();
  c.output_dim = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ModelConfig::desk();
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ModelConfig::desk();
  c.conv.clear();
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("model files round trip and detect corruption") {
  test::TempDir dir("model");
  ModelConfig c = tiny_config();
  c.epochs = 1;
  TrainedModel m = train(c, {{random_tensor({1, 16, 16}, 17), {0.1, 0.2}},
                             {random_tensor({1, 16, 16}, 18), {-0.3, 0.4}}});
  save_model(dir / "m.bin", m);
  const TrainedModel back = load_model(dir / "m.bin");
  CHECK(back.config == m.config);
  CHECK(back.target_offset == m.target_offset);
  CHECK(back.target_scale == m.target_scale);
  const auto pa = std::as_const(m.network).parameters();
  const auto pb = back.network.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);

  std::string bytes = test::read_file(dir / "m.bin");
  CHECK(bytes.substr(0, 8) == "FFGZMODL");
  save_model(dir / "m2.bin", m);
  CHECK(test::read_file(dir / "m2.bin") == bytes);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  test::write_file(dir / "bad.bin", flipped);
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), IoError);
  test::write_file(dir / "short.bin", bytes.substr(0, 40));
  CHECK_THROWS_AS(load_model(dir / "short.bin"), IoError);
  test::write_file(dir / "magic.bin", "XXXXXXXX" + bytes.substr(8));
  CHECK_THROWS_AS(load_model(dir / "magic.bin"), IoError);

  CHECK(model_config_from_json(model_config_to_json(ModelConfig::full_scale())) ==
        ModelConfig::full_scale());

  write_training_log(dir / "log.csv", {{1, 0.5, std::nan("")}, {2, 0.25, 0.125}});
  const std::string log = test::read_file(dir / "log.csv");
  CHECK(log.rfind("epoch,train_loss,val_loss\n", 0) == 0);
  CHECK(log.find("2,0.25,0.125") != std::string::npos);
}

}  // TEST_SUITE
