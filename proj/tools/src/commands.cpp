#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "config.hpp"
#include "fullface/crossval.hpp"
#include "fullface/error.hpp"
#include "fullface/image_io.hpp"
#include "fullface/importance.hpp"
#include "fullface/model_io.hpp"
#include "fullface/synth.hpp"

namespace fullface::cli {

namespace {

RunConfig configure(const Options& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  RunConfig c = load_config(o.config);
  if (o.seed) c.override_seed(*o.seed);
  if (o.task) c.task = parse_task(*o.task);
  if (o.variant) c.variant = parse_variant(*o.variant);
  if (o.jobs) {
    if (*o.jobs < 1) throw ValidationError("--jobs must be at least 1");
    c.jobs = *o.jobs;
  }
  return c;
}

void require_out(const Options& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
  std::filesystem::create_directories(o.out);
}

void require(bool present, const std::string& what) {
  if (!present) throw ValidationError(what + " is required (no default seeds)");
}

std::vector<Sample> load_run_manifest(const RunConfig& c) {
  if (c.manifest.empty()) throw ValidationError("[run] manifest is required");
  return load_manifest(c.manifest);
}

std::vector<PreparedSample> prepare(const RunConfig& c, const std::vector<Sample>& samples) {
  PrepareOptions po;
  po.task = c.task;
  po.variant = c.variant;
  po.space = c.space;
  po.input_size = c.model.input_size;
  po.input_channels = c.model.input_channels;
  po.jobs = c.jobs;
  return prepare_samples(samples, po);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// The sample re-expressed in the normalized camera.
Sample normalized_as_sample(const Sample& s, const NormalizedSample& n,
                            const NormalizationSpace& space, const std::string& image_field) {
  const NormalizationTransform& t = n.transform;
  Sample out;
  out.person_id = s.person_id;
  out.image_field = image_field;
  out.camera = space.camera;
  out.landmarks = n.landmarks;
  for (int i = 0; i < 6; ++i) out.landmarks3d[i] = t.conversion * s.landmarks3d[i];
  out.head.rotation = t.rotation * s.head.rotation;
  out.head.translation = t.conversion * s.head.translation;
  const Vec3 ref = t.conversion * s.reference();
  const double reach = (s.gaze_target - s.reference()).norm();
  out.gaze_target = ref + reach * angles_to_vector(n.gaze);
  return out;
}

}  // namespace

int cmd_synth(const Options& o, std::ostream& log) {
  const RunConfig c = configure(o);
  require(c.synth_seed, "[synth] seed");
  require_out(o);
  const auto samples = synth_generate(c.synth, o.out);
  log << "wrote " << samples.size() << " samples to " << (o.out / "manifest.csv").string() << '\n';
  return 0;
}

int cmd_normalize(const Options& o, std::ostream& log) {
  const RunConfig c = configure(o);
  const auto samples = load_run_manifest(c);
  require_out(o);
  std::filesystem::create_directories(o.out / "images");
  std::vector<Sample> normalized(samples.size());
  std::vector<NormalizedSample> results(samples.size());
  parallel_for(samples.size(), c.jobs, [&](std::size_t i) {
    results[i] = normalize_sample(samples[i], c.space);
    const std::string field = "images/" + std::to_string(i) + ".png";
    write_png(o.out / field, results[i].image);
    normalized[i] = normalized_as_sample(samples[i], results[i], c.space, field);
  });
  write_manifest(o.out / "manifest.csv", normalized);
  std::ofstream angles(o.out / "angles.csv");
  angles << "sample,person_id,gaze_yaw,gaze_pitch,head_yaw,head_pitch\n";
  angles.precision(17);
  for (std::size_t i = 0; i < results.size(); ++i) {
    angles << i << ',' << samples[i].person_id << ',' << results[i].gaze.yaw << ','
           << results[i].gaze.pitch << ',' << results[i].head.yaw << ',' << results[i].head.pitch
           << '\n';
  }
  log << "normalized " << samples.size() << " samples into " << o.out.string() << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& log) {
  const RunConfig c = configure(o);
  require(c.model_seed, "[model] seed");
  const auto samples = load_run_manifest(c);
  require_out(o);
  const auto prepared = prepare(c, samples);
  std::vector<TrainingExample> examples;
  examples.reserve(prepared.size());
  for (const auto& p : prepared) examples.push_back({p.input, p.target});
  const TrainedModel model = train(c.model, examples);
  save_model(o.out / "model.bin", model);
  write_training_log(o.out / "training_log.csv", model.log);
  log << "trained on " << examples.size() << " samples (" << to_string(c.task) << ", "
      << to_string(c.variant) << ")";
  if (!model.log.empty()) log << ", final loss " << num(model.log.back().train_loss);
  log << "; wrote " << (o.out / "model.bin").string() << '\n';
  return 0;
}

int cmd_eval(const Options& o, std::ostream& log) {
  const RunConfig c = configure(o);
  require(c.model_seed, "[model] seed");
  require(c.split_seed_set, "[run] seed");
  const auto samples = load_run_manifest(c);
  require_out(o);
  const auto folds = make_splits(person_ids(samples), c.scheme, c.k, c.split_seed);
  const auto prepared = prepare(c, samples);
  CrossValOptions co;
  co.task = c.task;
  co.model = c.model;
  co.jobs = c.jobs;
  const CrossValResult result = run_crossvalidation(prepared, folds, co);
  for (const auto& f : result.folds) {
    write_fold_csv(o.out / ("fold_" + std::to_string(f.fold) + ".csv"), f);
    write_training_log(o.out / ("fold_" + std::to_string(f.fold) + "_log.csv"), f.log);
  }
  write_summary_csv(o.out / "summary.csv", result);
  const auto& s = result.summary;
  log << folds.size() << " folds (" << to_string(c.task) << ", " << to_string(c.variant)
      << "): angular " << num(s.angular.mean) << " deg";
  if (std::isfinite(s.euclid.mean)) log << ", euclidean " << num(s.euclid.mean) << " mm";
  log << "; head-pose naive " << num(s.baselines.headpose_naive_deg) << " deg, regression "
      << num(s.baselines.headpose_regression_deg) << " deg, mean predictor "
      << num(s.baselines.mean_predictor_deg) << " deg\n";
  return 0;
}

int cmd_importance(const Options& o, std::ostream& log) {
  RunConfig c = configure(o);
  require(c.cluster_seed, "[importance] seed");
  if (c.task != Task::gaze3d) throw ValidationError("importance maps need the 3d task");
  const std::filesystem::path model_path = o.model ? *o.model : c.importance_model;
  if (model_path.empty()) throw ValidationError("[importance] model or --model is required");
  const TrainedModel model = load_model(model_path);
  std::optional<TrainedModel> compare;
  if (!c.compare_model.empty()) compare = load_model(c.compare_model);
  c.model = model.config;

  auto samples = load_run_manifest(c);
  if (c.max_samples > 0 && static_cast<std::size_t>(c.max_samples) < samples.size()) {
    samples.resize(static_cast<std::size_t>(c.max_samples));
  }
  require_out(o);
  const auto prepared = prepare(c, samples);
  const ModelPredictor predictor(model);
  std::optional<ModelPredictor> compare_predictor;
  if (compare) compare_predictor.emplace(*compare);

  std::vector<ClusterInput> inputs(prepared.size());
  parallel_for(prepared.size(), c.jobs, [&](std::size_t i) {
    const PreparedSample& p = prepared[i];
    const auto opts = OcclusionOptions::scaled_for(p.image.width());
    const ImportanceMap m = occlusion_importance(predictor, p.image, p.gaze_normalized, opts);
    ClusterInput& in = inputs[i];
    in.image = p.image;
    in.landmarks = p.landmarks;
    in.map = m.map;
    in.gaze = p.gaze_normalized;
    in.head = p.head_normalized;
    in.errors.push_back(m.base_error);
    if (compare_predictor) {
      const Vec3 g = angles_to_vector(p.gaze_normalized);
      const auto pred = compare_predictor->predict(p.image);
      in.errors.push_back(angular_error(
          angles_to_vector({pred[0], std::clamp(pred[1], -1.5, 1.5)}), g));
    }
  });
  const ClusterResult result = cluster_and_average(inputs, c.cluster);
  std::vector<std::string> names{"model"};
  if (compare) names.emplace_back("compare_model");
  write_cluster_outputs(o.out, result, c.cluster, names);
  log << "importance maps for " << inputs.size() << " samples in " << result.clusters.size()
      << " clusters by " << to_string(c.cluster.feature) << "; centroids";
  for (const auto& cl : result.clusters) log << ' ' << num(cl.centroid);
  if (result.kmeans.empty_clusters) log << " (" << result.kmeans.empty_clusters << " empty)";
  log << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& log) {
  const RunConfig c = configure(o);
  require(c.gradcheck_seed_set, "[gradcheck] seed or --seed");
  require_out(o);
  std::ofstream csv(o.out / "gradcheck.csv");
  csv << "case,group,checked,max_rel_error,spatial\n";
  csv.precision(9);
  double worst = 0.0;
  double worst_spatial = 0.0;
  GradCheckOptions go;
  go.epsilon = c.gradcheck_epsilon;
  for (int i = 0; i < c.gradcheck_count; ++i) {
    const auto report = random_grad_check(c.model, c.gradcheck_seed + static_cast<std::uint64_t>(i), go);
    for (const auto& g : report.groups) {
      csv << i << ',' << g.name << ',' << g.checked << ',' << g.max_rel_error << ','
          << (g.spatial ? 1 : 0) << '\n';
    }
    worst = std::max(worst, report.max_rel_error);
    worst_spatial = std::max(worst_spatial, report.max_spatial_rel_error);
  }
  log << c.gradcheck_count << " cases: max relative error " << worst
      << ", spatial-weights branch (N-scaled) " << worst_spatial << '\n';
  if (worst >= 1e-3 || worst_spatial >= 1e-3) {
    log << "gradient check FAILED (threshold 1e-3)\n";
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Full-face appearance-based gaze estimation"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::string task, variant, model;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI run configuration")->required();
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--seed", seed, "Override every seed in the config");
    sub->add_option("--jobs", jobs, "Maximum concurrency")->check(CLI::PositiveNumber);
  };
  auto add_pipeline = [&](CLI::App* sub) {
    sub->add_option("--task", task, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}));
    sub->add_option("--variant", variant, "face, eyes_blocked or single_eye")
        ->check(CLI::IsMember({"face", "eyes_blocked", "single_eye"}));
  };

  struct Entry {
    CLI::App* app;
    int (*fn)(const Options&, std::ostream&);
  };
  std::vector<Entry> entries;
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  add_common(synth);
  entries.push_back({synth, cmd_synth});
  auto* normalize = app.add_subcommand("normalize", "Warp a manifest into the normalized space");
  add_common(normalize);
  entries.push_back({normalize, cmd_normalize});
  auto* train_cmd = app.add_subcommand("train", "Train a model on a whole manifest");
  add_common(train_cmd);
  add_pipeline(train_cmd);
  entries.push_back({train_cmd, cmd_train});
  auto* eval = app.add_subcommand("eval", "Cross-subject evaluation");
  add_common(eval);
  add_pipeline(eval);
  entries.push_back({eval, cmd_eval});
  auto* importance = app.add_subcommand("importance", "Occlusion importance maps and clustering");
  add_common(importance);
  add_pipeline(importance);
  importance->add_option("--model", model, "Model file (overrides [importance] model)");
  entries.push_back({importance, cmd_importance});
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  add_common(gradcheck);
  entries.push_back({gradcheck, cmd_gradcheck});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  for (const auto& e : entries) {
    if (!e.app->parsed()) continue;
    if (e.app->count("--seed")) o.seed = seed;
    if (e.app->count("--jobs")) o.jobs = jobs;
    if (!task.empty()) o.task = task;
    if (!variant.empty()) o.variant = variant;
    if (!model.empty()) o.model = model;
    try {
      return e.fn(o, out);
    } catch (const ValidationError& ex) {
      err << "error: " << ex.what() << '\n';
      return 2;
    } catch (const std::exception& ex) {
      err << "error: " << ex.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace fullface::cli
