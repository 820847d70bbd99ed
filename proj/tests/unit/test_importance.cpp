#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "fullface/error.hpp"
#include "fullface/image_io.hpp"
#include "fullface/importance.hpp"
#include "support.hpp"

using namespace fullface;

namespace {

class ConstantPredictor final : public GazePredictor {
 public:
  std::array<double, 2> predict(const Image&) const override { return {0.1, -0.05}; }
};

// Linear read-out of the pixels inside one square region.
class RegionPredictor final : public GazePredictor {
 public:
  explicit RegionPredictor(Rect region) : region_(region) {}
  std::array<double, 2> predict(const Image& img) const override {
    double yaw = 0.0, pitch = 0.0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (!region_.contains(Vec2(x, y))) continue;
        yaw += 0.004 * (img.at(x, y) - 0.2) * ((x + y) % 3 - 1.0);
        pitch += 0.003 * (img.at(x, y) - 0.2);
      }
    }
    return {yaw, pitch};
  }

 private:
  Rect region_;
};

Image noise(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(size, size, 1);
  for (double& v : img.pixels()) v = u(rng);
  return img;
}

Landmarks2D centered_landmarks() {
  Landmarks2D lm;
  lm.points = {Vec2(14, 24), Vec2(26, 24), Vec2(38, 24), Vec2(50, 24), Vec2(22, 46), Vec2(42, 46)};
  return lm;
}

ClusterInput input_with(double feature, double map_value, double error) {
  ClusterInput in;
  in.image = Image(64, 64, 1, 0.5);
  in.landmarks = centered_landmarks();
  in.map = Map2D(64, 64, map_value);
  in.gaze = {feature, 0.0};
  in.errors = {error};
  return in;
}

}  // namespace

TEST_SUITE("importance") {

TEST_CASE("mask geometry") {
  const auto desk = OcclusionOptions::scaled_for(64);
  CHECK(desk.mask_size == 9);
  CHECK(desk.stride == 4);
  const auto full = OcclusionOptions::scaled_for(448);
  CHECK(full.mask_size == 64);
  CHECK(full.stride == 32);

  CHECK(mask_positions(64, 9, 9) == std::vector<int>{0, 9, 18, 27, 36, 45, 54, 55});
  for (int extent : {9, 20, 64, 100}) {
    for (int mask : {3, 9}) {
      const auto pos = mask_positions(extent, mask, mask);
      const int expected = (extent - mask + mask - 1) / mask + 1;
      CHECK(static_cast<int>(pos.size()) == expected);
      CHECK(pos.front() == 0);
      CHECK(pos.back() == extent - mask);
    }
  }
  CHECK(mask_positions(448, 64, 32).size() == 13);
  CHECK_THROWS_AS(mask_positions(8, 9, 4), ValidationError);
}

TEST_CASE("constant model gives an all-zero map") {
  const Image img = noise(64, 1);
  const ImportanceMap m =
      occlusion_importance(ConstantPredictor{}, img, {0.3, 0.1}, OcclusionOptions::scaled_for(64));
  CHECK(m.map.width == 64);
  CHECK(m.map.height == 64);
  CHECK(m.base_error > 0.0);
  for (double v : m.cells.values) CHECK(v == 0.0);
  for (double v : m.map.values) CHECK(v == 0.0);
}

TEST_CASE("importance concentrates on the region a model reads") {
  const Rect region{24, 16, 16, 16};
  const RegionPredictor model(region);
  for (std::uint64_t seed = 2; seed < 6; ++seed) {
    const Image img = noise(64, seed);
    const ImportanceMap m =
        occlusion_importance(model, img, {0.2, -0.1}, OcclusionOptions::scaled_for(64));
    double total = 0.0;
    for (std::size_t j = 0; j < m.ys.size(); ++j) {
      for (std::size_t i = 0; i < m.xs.size(); ++i) {
        const bool overlaps = m.xs[i] < region.x + region.width && m.xs[i] + m.mask_size > region.x &&
                              m.ys[j] < region.y + region.height && m.ys[j] + m.mask_size > region.y;
        const double v = m.cells.at(static_cast<int>(i), static_cast<int>(j));
        if (!overlaps) CHECK(v == 0.0);
        total += std::abs(v);
      }
    }
    CHECK(total > 0.0);
    CHECK(importance_mass_in(m, region) >= 0.9);
    for (double v : m.map.values) CHECK(std::isfinite(v));
  }
}

TEST_CASE("cluster features and alignment points") {
  ClusterInput in = input_with(0.4, 0.0, 1.0);
  in.head = {-0.2, 0.3};
  CHECK(cluster_feature_value(in, ClusterFeature::gaze_yaw) == 0.4);
  CHECK(cluster_feature_value(in, ClusterFeature::head_pitch) == 0.3);
  CHECK(cluster_feature_value(in, ClusterFeature::illumination_diff) == 0.0);
  CHECK(parse_cluster_feature("head_yaw") == ClusterFeature::head_yaw);
  CHECK(to_string(ClusterFeature::gaze_pitch) == "gaze_pitch");
  CHECK_THROWS_AS(parse_cluster_feature("nose"), ValidationError);
  const auto pts = alignment_points(centered_landmarks());
  CHECK((pts[0] - Vec2(20, 24)).norm() < 1e-12);
  CHECK((pts[1] - Vec2(44, 24)).norm() < 1e-12);
  CHECK((pts[2] - Vec2(32, 46)).norm() < 1e-12);
}

TEST_CASE("clustering by a scalar feature") {
  std::vector<ClusterInput> inputs{input_with(11, 4, 4), input_with(0, 1, 1), input_with(10, 3, 3),
                                   input_with(1, 2, 2)};
  const ClusterSpec spec{ClusterFeature::gaze_yaw, 2, 0};
  const ClusterResult r = cluster_and_average(inputs, spec);
  REQUIRE(r.clusters.size() == 2);
  CHECK(r.clusters[0].centroid == doctest::Approx(0.5));
  CHECK(r.clusters[1].centroid == doctest::Approx(10.5));
  CHECK(r.clusters[0].count == 2);
  CHECK(r.clusters[0].mean_errors[0] == doctest::Approx(1.5));
  CHECK(r.clusters[1].mean_errors[0] == doctest::Approx(3.5));
  CHECK(r.clusters[0].mean_map.at(32, 32) == doctest::Approx(1.5));
  CHECK(r.clusters[1].mean_map.at(32, 32) == doctest::Approx(3.5));
  CHECK(r.clusters[0].mean_face.at(32, 32) == doctest::Approx(0.5));
  CHECK(r.kmeans.assignment == std::vector<int>{1, 0, 1, 0});

  const ClusterResult one = cluster_and_average(inputs, {ClusterFeature::gaze_yaw, 1, 0});
  REQUIRE(one.clusters.size() == 1);
  CHECK(one.clusters[0].count == 4);
  CHECK(one.clusters[0].mean_map.at(20, 30) == doctest::Approx(2.5));

  std::vector<ClusterInput> same{input_with(2, 1, 1), input_with(2, 1, 1), input_with(2, 1, 1)};
  const ClusterResult collapsed = cluster_and_average(same, {ClusterFeature::gaze_yaw, 2, 0});
  CHECK(collapsed.kmeans.empty_clusters == 1);
  CHECK(collapsed.clusters[0].count + collapsed.clusters[1].count == 3);

  CHECK_THROWS_AS(cluster_and_average(inputs, {ClusterFeature::gaze_yaw, 5, 0}), ValidationError);
}

TEST_CASE("aligned averaging warps onto the mean triangle") {
  ClusterInput a = input_with(0, 0, 0);
  ClusterInput b = input_with(0, 0, 0);
  for (auto& p : b.landmarks.points) p += Vec2(4, 0);
  // A bright column under the left-eye midpoint of each face.
  for (int y = 0; y < 64; ++y) {
    a.map.at(20, y) = 1.0;
    b.map.at(24, y) = 1.0;
  }
  const ClusterResult r = cluster_and_average({a, b}, {ClusterFeature::gaze_yaw, 1, 0});
  CHECK((r.mean_triangle[0] - Vec2(22, 24)).norm() < 1e-12);
  CHECK(r.clusters[0].mean_map.at(22, 30) == doctest::Approx(1.0));
  CHECK(r.clusters[0].mean_map.at(18, 30) == doctest::Approx(0.0));
}

TEST_CASE("cluster outputs") {
  test::TempDir dir("clusters");
  std::vector<ClusterInput> inputs{input_with(0, 1, 2), input_with(1, -3, 4)};
  const ClusterSpec spec{ClusterFeature::gaze_yaw, 1, 7};
  write_cluster_outputs(dir.path(), cluster_and_average(inputs, spec), spec, {"model"});
  CHECK(std::filesystem::exists(dir / "cluster_0_importance.pgm"));
  CHECK(std::filesystem::exists(dir / "cluster_0_face.pgm"));
  CHECK_FALSE(std::filesystem::exists(dir / "cluster_1_importance.pgm"));
  const auto doc = nlohmann::json::parse(test::read_file(dir / "clusters.json"));
  CHECK(doc["k"] == 1);
  CHECK(doc["feature"] == "gaze_yaw");
  CHECK(doc["clusters"].size() == 1);
  CHECK(doc["clusters"][0]["mean_error_deg"]["model"].get<double>() == doctest::Approx(3.0));
  // Mean map is -1 everywhere; negative importance clamps to black.
  const Map2D pgm = read_pgm(dir / "cluster_0_importance.pgm");
  for (double v : pgm.values) CHECK(v == 0.0);
}

}  // TEST_SUITE
