#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fullface/error.hpp"

namespace fullface::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string text(const std::string& key) const {
    used_.insert(key);
    return trim(tree_->get<std::string>(key));
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    out = number<T>(key, text(key));
  }

  void read_bool(const std::string& key, bool& out) const {
    if (!has(key)) return;
    const std::string v = text(key);
    if (v == "true" || v == "1" || v == "yes") {
      out = true;
    } else if (v == "false" || v == "0" || v == "no") {
      out = false;
    } else {
      fail(key, "expected true or false, got '" + v + "'");
    }
  }

  template <typename T>
  T number(const std::string& key, const std::string& v) const {
    T value{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), value);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      fail(key, "not a valid number: '" + v + "'");
    }
    return value;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ValidationError("[" + name_ + "] " + key + ": " + why);
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_) {
      if (!used_.count(key)) fail(key, "unknown key");
    }
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
  mutable std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

void read_synth(const Section& s, RunConfig& c) {
  SynthConfig& y = c.synth;
  s.read("persons", y.persons);
  s.read("samples_per_person", y.samples_per_person);
  s.read("image_size", y.image_size);
  s.read("focal", y.focal);
  s.read("gaze_yaw_range", y.gaze_range.yaw);
  s.read("gaze_pitch_range", y.gaze_range.pitch);
  s.read("head_yaw_range", y.head_range.yaw);
  s.read("head_pitch_range", y.head_range.pitch);
  s.read("roll_range", y.roll_range);
  s.read("illumination_range", y.illumination_range);
  s.read("noise_std", y.noise_std);
  s.read("eye_head_coupling", y.eye_head_coupling);
  s.read("distance_min", y.distance_min);
  s.read("distance_max", y.distance_max);
  s.read("lateral_offset", y.lateral_offset);
  s.read("brow_jitter_std", y.brow_jitter_std);
  if (s.has("seed")) {
    s.read("seed", y.seed);
    c.synth_seed = true;
  }
  try {
    y.validate();
  } catch (const ValidationError& e) {
    s.fail("config", e.what());
  }
}

ConvSpec parse_conv(const Section& s, const std::string& item) {
  const auto parts = split(item, ':');
  if (parts.size() != 4 && parts.size() != 6) {
    s.fail("conv", "layer '" + item + "' must be channels:kernel:stride:pad[:pool_kernel:pool_stride]");
  }
  std::vector<int> v;
  for (const auto& p : parts) v.push_back(s.number<int>("conv", p));
  ConvSpec spec{v[0], v[1], v[2], v[3], 0, 0};
  if (v.size() == 6) {
    spec.pool_kernel = v[4];
    spec.pool_stride = v[5];
  }
  return spec;
}

void read_model(const Section& s, RunConfig& c) {
  if (s.has("preset")) {
    const std::string p = s.text("preset");
    if (p == "desk") {
      c.model = ModelConfig::desk();
    } else if (p == "full_scale") {
      c.model = ModelConfig::full_scale();
    } else {
      s.fail("preset", "expected desk or full_scale, got '" + p + "'");
    }
  }
  ModelConfig& m = c.model;
  s.read("input_size", m.input_size);
  s.read("input_channels", m.input_channels);
  if (s.has("conv")) {
    m.conv.clear();
    for (const auto& item : split(s.text("conv"), ',')) m.conv.push_back(parse_conv(s, item));
  }
  s.read_bool("spatial_weights", m.spatial_weights);
  if (s.has("spatial_widths")) {
    const auto parts = split(s.text("spatial_widths"), ',');
    if (parts.size() != 2) s.fail("spatial_widths", "expected two integers");
    m.spatial_widths = {s.number<int>("spatial_widths", parts[0]),
                        s.number<int>("spatial_widths", parts[1])};
  }
  if (s.has("fc")) {
    m.fc.clear();
    for (const auto& item : split(s.text("fc"), ',')) m.fc.push_back(s.number<int>("fc", item));
  }
  if (s.has("init")) {
    const std::string v = s.text("init");
    if (v == "he") {
      m.init = InitScheme::he;
    } else if (v == "gaussian") {
      m.init = InitScheme::gaussian;
    } else {
      s.fail("init", "expected he or gaussian, got '" + v + "'");
    }
  }
  s.read("learning_rate", m.learning_rate);
  s.read("momentum", m.momentum);
  s.read("batch_size", m.batch_size);
  s.read("epochs", m.epochs);
  if (s.has("seed")) {
    s.read("seed", m.seed);
    c.model_seed = true;
  }
  try {
    m.validate();
  } catch (const ValidationError& e) {
    s.fail("config", e.what());
  }
}

void read_normalization(const Section& s, RunConfig& c) {
  int size = c.model.input_size;
  s.read("size", size);
  const NormalizationSpace d = default_space(size);
  double distance = d.distance;
  double focal = d.camera.projection(0, 0);
  s.read("distance", distance);
  s.read("focal", focal);
  if (!(distance > 0.0)) s.fail("distance", "must be positive");
  if (!(focal > 0.0)) s.fail("focal", "must be positive");
  if (size <= 0) s.fail("size", "must be positive");
  c.space = NormalizationSpace::square(distance, focal, size);
}

void read_run(const Section& s, RunConfig& c, const std::filesystem::path& base) {
  if (s.has("manifest")) c.manifest = resolve(base, s.text("manifest"));
  try {
    if (s.has("task")) c.task = parse_task(s.text("task"));
    if (s.has("variant")) c.variant = parse_variant(s.text("variant"));
  } catch (const ValidationError& e) {
    s.fail("task/variant", e.what());
  }
  if (s.has("scheme")) {
    const std::string v = s.text("scheme");
    if (v == "loocv") {
      c.scheme = SplitScheme::loocv;
    } else if (v == "kfold") {
      c.scheme = SplitScheme::kfold;
    } else {
      s.fail("scheme", "expected loocv or kfold, got '" + v + "'");
    }
  }
  s.read("k", c.k);
  if (s.has("seed")) {
    s.read("seed", c.split_seed);
    c.split_seed_set = true;
  }
  s.read("jobs", c.jobs);
  if (c.jobs < 1) s.fail("jobs", "must be at least 1");
}

void read_importance(const Section& s, RunConfig& c, const std::filesystem::path& base) {
  if (s.has("model")) c.importance_model = resolve(base, s.text("model"));
  if (s.has("compare_model")) c.compare_model = resolve(base, s.text("compare_model"));
  if (s.has("feature")) {
    try {
      c.cluster.feature = parse_cluster_feature(s.text("feature"));
    } catch (const ValidationError& e) {
      s.fail("feature", e.what());
    }
  }
  s.read("k", c.cluster.k);
  if (c.cluster.k < 1) s.fail("k", "must be at least 1");
  if (s.has("seed")) {
    s.read("seed", c.cluster.seed);
    c.cluster_seed = true;
  }
  s.read("max_samples", c.max_samples);
  if (c.max_samples < 0) s.fail("max_samples", "must be non-negative");
}

void read_gradcheck(const Section& s, RunConfig& c) {
  s.read("count", c.gradcheck_count);
  s.read("epsilon", c.gradcheck_epsilon);
  if (s.has("seed")) {
    s.read("seed", c.gradcheck_seed);
    c.gradcheck_seed_set = true;
  }
  if (c.gradcheck_count < 1) s.fail("count", "must be at least 1");
  if (!(c.gradcheck_epsilon > 0.0)) s.fail("epsilon", "must be positive");
}

}  // namespace

void RunConfig::override_seed(std::uint64_t seed) {
  synth.seed = seed;
  model.seed = seed;
  split_seed = seed;
  cluster.seed = seed;
  gradcheck_seed = seed;
  synth_seed = model_seed = split_seed_set = cluster_seed = gradcheck_seed_set = true;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
  }
  static const std::set<std::string> known{"synth", "model", "normalization", "run", "importance",
                                           "gradcheck"};
  for (const auto& [name, section] : tree) {
    if (!known.count(name)) throw ValidationError("config: unknown section [" + name + "]");
    if (section.empty() && !section.data().empty()) {
      throw ValidationError("config: key '" + name + "' outside any section");
    }
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  RunConfig c;
  const Section synth = section("synth"), model = section("model"), norm = section("normalization"),
                run = section("run"), imp = section("importance"), grad = section("gradcheck");
  read_synth(synth, c);
  read_model(model, c);
  read_normalization(norm, c);
  read_run(run, c, base_dir);
  read_importance(imp, c, base_dir);
  read_gradcheck(grad, c);
  for (const Section* s : {&synth, &model, &norm, &run, &imp, &grad}) s->reject_unknown();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c = parse_config(buf.str(), path.parent_path());
  c.source = path;
  return c;
}

}  // namespace fullface::cli
