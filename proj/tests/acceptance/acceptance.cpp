// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "config.hpp"
#include "fullface/crossval.hpp"
#include "fullface/evaluation.hpp"
#include "fullface/geometry.hpp"
#include "fullface/importance.hpp"
#include "fullface/network.hpp"
#include "fullface/synth.hpp"

using namespace fullface;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0, worst_spatial = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = random_grad_check(ModelConfig::desk(), seed);
    worst = std::max(worst, r.max_rel_error);
    worst_spatial = std::max(worst_spatial, r.max_spatial_rel_error);
  }
  const double t = seconds_since(t0);
  return {worst < 1e-3 && worst_spatial < 1e-3 && t < 120.0,
          "20 desk models: max rel error " + fmt("%.2e", worst) + ", spatial (x N) " +
              fmt("%.2e", worst_spatial) + ", " + fmt("%.1f", t) + " s"};
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Outcome geometry() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> angle(-0.8, 0.8), lateral(-200.0, 200.0),
      depth(300.0, 1000.0), focal(400.0, 1200.0), offset(-40.0, 40.0), jitter(-100.0, 100.0);
  const NormalizationSpace space = NormalizationSpace::square(600.0, 960.0, 224);
  double m_err = 0.0, axis_err = 0.0, gaze_err = 0.0, px_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    HeadPose head;
    head.rotation = rotation_from_euler(angle(rng), angle(rng), angle(rng));
    const Vec3 ref(lateral(rng), lateral(rng), depth(rng));
    head.translation = ref;
    const CameraModel input = CameraModel::from_intrinsics(
        focal(rng), focal(rng), 320.0 + offset(rng), 240.0 + offset(rng), 640, 480);
    const auto t = build_normalization(head, ref, space, input);
    m_err = std::max(m_err, (t.conversion - t.scaling * t.rotation).norm());
    axis_err = std::max(axis_err, (t.conversion * ref - Vec3(0, 0, space.distance)).norm());
    const Vec3 g = random_unit(rng);
    const Vec3 back = normalize_gaze(t, normalize_gaze(t, g, GazeDirection::forward),
                                     GazeDirection::inverse);
    gaze_err = std::max(gaze_err, (back - g).norm());
    const Vec3 p = ref + Vec3(jitter(rng), jitter(rng), jitter(rng));
    const Vec2 direct = project(space.camera, t.conversion * p);
    const Vec2 warped = apply_homography(t.image_homography, project(input, p));
    px_err = std::max(px_err, (direct - warped).norm());
  }
  const double t = seconds_since(t0);
  return {m_err <= 1e-12 && axis_err < 1e-6 && gaze_err < 1e-9 && px_err < 1e-6 && t < 10.0,
          "1000 cases: |M - SR| " + fmt("%.1e", m_err) + ", |Mx - (0,0,d)| " + fmt("%.1e", axis_err) +
              " mm, gaze round trip " + fmt("%.1e", gaze_err) + ", warp/projection " +
              fmt("%.1e", px_err) + " px, " + fmt("%.2f", t) + " s"};
}

Outcome trunk_shape() {
  const ModelConfig c = ModelConfig::full_scale();
  const Network trunk = Network::trunk_only(c);
  const Tensor u = trunk.trunk_forward(Tensor({3, 448, 448}, 0.25));
  std::string shape;
  for (std::size_t d : u.shape()) shape += (shape.empty() ? "" : "x") + std::to_string(d);
  return {u.shape() == std::vector<std::size_t>{256, 13, 13}, "448x448x3 input gives U of shape " + shape};
}

struct DeskRun {
  bool ok = false;
  std::string error;
  CrossValSummary face, eyes_blocked;
  double face_seconds = 0.0, total_seconds = 0.0;
};

CrossValSummary loocv(const cli::RunConfig& c, const std::vector<Sample>& samples,
                      InputVariant variant) {
  PrepareOptions po;
  po.task = Task::gaze3d;
  po.variant = variant;
  po.space = c.space;
  po.input_size = c.model.input_size;
  po.input_channels = c.model.input_channels;
  po.jobs = c.jobs;
  const auto prepared = prepare_samples(samples, po);
  const auto folds = make_splits(person_ids(samples), SplitScheme::loocv, 0, c.split_seed);
  CrossValOptions co;
  co.task = Task::gaze3d;
  co.model = c.model;
  co.jobs = c.jobs;
  return run_crossvalidation(prepared, folds, co).summary;
}

DeskRun desk_run(const fs::path& work) {
  DeskRun r;
  const auto t0 = Clock::now();
  try {
    const cli::RunConfig c = cli::load_config(fs::path(FULLFACE_CONFIG_DIR) / "desk.ini");
    const auto samples = synth_generate(c.synth, work / "desk");
    r.face = loocv(c, samples, InputVariant::face);
    r.face_seconds = seconds_since(t0);
    r.eyes_blocked = loocv(c, samples, InputVariant::eyes_blocked);
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.total_seconds = seconds_since(t0);
  return r;
}

Outcome desk_accuracy(const DeskRun& r) {
  if (!r.ok) return {false, "run failed: " + r.error};
  const double ratio = r.face.angular.mean / r.face.baselines.mean_predictor_deg;
  return {ratio <= 0.4 && r.face_seconds < 900.0,
          "15x200 LOOCV face " + fmt("%.2f", r.face.angular.mean) + " deg vs mean predictor " +
              fmt("%.2f", r.face.baselines.mean_predictor_deg) + " deg (ratio " + fmt("%.3f", ratio) +
              "), " + fmt("%.0f", r.face_seconds) + " s"};
}

Outcome desk_ordering(const DeskRun& r) {
  if (!r.ok) return {false, "run failed: " + r.error};
  const double face = r.face.angular.mean, blocked = r.eyes_blocked.angular.mean;
  const double regression = r.face.baselines.headpose_regression_deg;
  const double naive = r.face.baselines.headpose_naive_deg;
  return {face < blocked && blocked < regression && regression <= naive,
          "face " + fmt("%.2f", face) + " < eyes_blocked " + fmt("%.2f", blocked) + " < regression " +
              fmt("%.2f", regression) + " <= naive " + fmt("%.2f", naive) + " deg"};
}

class ConstantPredictor final : public GazePredictor {
 public:
  std::array<double, 2> predict(const Image&) const override { return {0.05, 0.1}; }
};

// Reads only the pixels inside `region`.
class RegionPredictor final : public GazePredictor {
 public:
  explicit RegionPredictor(Rect region) : region_(region) {}
  std::array<double, 2> predict(const Image& img) const override {
    double yaw = 0.0, pitch = 0.0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (!region_.contains(Vec2(x, y))) continue;
        yaw += 0.005 * (img.at(x, y) - 0.3);
        pitch -= 0.002 * (img.at(x, y) - 0.3) * ((x % 2) ? 1.0 : -0.5);
      }
    }
    return {yaw, pitch};
  }

 private:
  Rect region_;
};

Outcome occlusion() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rect region{36, 8, 16, 16};
  const RegionPredictor oracle(region);
  const ConstantPredictor constant;
  const auto opts = OcclusionOptions::scaled_for(64);
  double worst_mass = 1.0, worst_constant = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Image img(64, 64, 1);
    for (double& v : img.pixels()) v = u(rng);
    const GazeAngles truth{0.2 * u(rng) - 0.1, 0.2 * u(rng) - 0.1};
    worst_mass = std::min(worst_mass, importance_mass_in(occlusion_importance(oracle, img, truth, opts), region));
    for (double v : occlusion_importance(constant, img, truth, opts).map.values) {
      worst_constant = std::max(worst_constant, std::abs(v));
    }
  }
  return {worst_mass >= 0.9 && worst_constant == 0.0,
          "oracle mass in region >= " + fmt("%.3f", worst_mass) + ", constant model max |map| " +
              fmt("%.1e", worst_constant)};
}

double brute_force_kmeans(const std::vector<double>& v, int k) {
  const std::size_t n = v.size();
  std::vector<int> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<double> sum(k, 0.0), sq(k, 0.0);
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]] += v[i];
      sq[label[i]] += v[i] * v[i];
      ++count[label[i]];
    }
    double cost = 0.0;
    for (int c = 0; c < k; ++c) {
      if (count[c]) cost += sq[c] - sum[c] * sum[c] / count[c];
    }
    best = std::min(best, cost);
    std::size_t i = 0;
    while (i < n && ++label[i] == k) label[i++] = 0;
    if (i == n) break;
  }
  return best;
}

Outcome kmeans() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 12);
  int cases = 0, mismatches = 0, increases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int count = size(rng);
    const int modes = 1 + trial % 3;
    std::vector<double> v(count);
    for (int i = 0; i < count; ++i) v[i] = 3.0 * (i % modes) + n(rng);
    for (int k = 1; k <= std::min(3, count); ++k) {
      const KMeansResult r = kmeans_1d(v, {k, static_cast<std::uint64_t>(trial)});
      const double best = brute_force_kmeans(v, k);
      if (std::abs(r.objective - best) > 1e-9 * std::max(1.0, best)) ++mismatches;
      for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
        if (r.objective_history[i] > r.objective_history[i - 1] + 1e-12) ++increases;
      }
      ++cases;
    }
  }
  return {mismatches == 0 && increases == 0,
          std::to_string(cases) + " cases: " + std::to_string(mismatches) +
              " differ from brute force, " + std::to_string(increases) + " objective increases"};
}

int invoke(const std::vector<std::string>& args, std::string& errors) {
  std::vector<const char*> argv{"fullface"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  errors += err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// synth -> train -> eval -> importance inside `root`, using a copy of the
// smoke config so its relative paths land under `root`.
bool pipeline(const fs::path& root, int jobs, std::string& errors) {
  fs::create_directories(root / "configs");
  fs::copy_file(fs::path(FULLFACE_CONFIG_DIR) / "smoke.ini", root / "configs" / "smoke.ini",
                fs::copy_options::overwrite_existing);
  const std::string cfg = (root / "configs" / "smoke.ini").string();
  const std::string j = std::to_string(jobs);
  const fs::path runs = root / "runs" / "smoke";
  for (const char* cmd : {"synth", "train", "eval", "importance"}) {
    if (invoke({cmd, "--config", cfg, "--out", (runs / cmd).string(), "--jobs", j}, errors) != 0) {
      return false;
    }
  }
  return true;
}

Outcome determinism(const fs::path& work) {
  std::string errors;
  const fs::path a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  if (!pipeline(a, 1, errors) || !pipeline(b, 2, errors)) return {false, "pipeline failed: " + errors};
  int files = 0, differ = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(a / "runs")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ++files;
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) {
      if (differ++ == 0) first_diff = rel.string();
    }
  }
  std::size_t files_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b / "runs")) files_b += entry.is_regular_file();
  const bool same_set = files_b == static_cast<std::size_t>(files);
  return {files > 0 && differ == 0 && same_set,
          std::to_string(files) + " files from --jobs 1 and --jobs 2" +
              (differ ? ", first difference " + first_diff : std::string(", byte-identical")) +
              (same_set ? "" : ", file sets differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "fullface_acceptance";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run (default all)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail
              << std::endl;
  };

  report(1, "gradients", gradients);
  report(2, "geometry", geometry);
  report(3, "full-scale shape", trunk_shape);
  DeskRun desk;
  if (wanted(4) || wanted(5)) desk = desk_run(work);
  report(4, "desk accuracy", [&] { return desk_accuracy(desk); });
  report(5, "ablation ordering", [&] { return desk_ordering(desk); });
  report(6, "occlusion oracle", occlusion);
  report(7, "k-means", kmeans);
  report(8, "determinism", [&] { return determinism(work); });
  return all ? 0 : 1;
}
