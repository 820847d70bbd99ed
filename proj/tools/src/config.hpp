#pragma once

// INI run configuration.
//
//   [synth]          SynthConfig fields, seed required for `synth`
//   [model]          preset = desk | full_scale, then per-field overrides;
//                    conv = c:k:s:p[:pk:ps], ... ; fc = 64, 32 ; seed required
//   [normalization]  distance (mm), focal (px), size (px)
//   [run]            manifest, task = 2d | 3d, variant, scheme = loocv | kfold,
//                    k, seed (split seed), jobs
//   [importance]     model, compare_model, feature, k, seed, max_samples
//   [gradcheck]      count, seed, epsilon
//
// Lines starting with ';' or '#' are comments. Unknown keys are errors.
// Relative paths resolve against the config file's directory.

#include <filesystem>
#include <optional>
#include <string>

#include "fullface/crossval.hpp"
#include "fullface/importance.hpp"
#include "fullface/network.hpp"
#include "fullface/synth.hpp"

namespace fullface::cli {

struct RunConfig {
  std::filesystem::path source;  // config file

  SynthConfig synth;
  bool synth_seed = false;

  ModelConfig model = ModelConfig::desk();
  bool model_seed = false;

  NormalizationSpace space = default_space(64);

  std::filesystem::path manifest;
  Task task = Task::gaze3d;
  InputVariant variant = InputVariant::face;
  SplitScheme scheme = SplitScheme::loocv;
  int k = 5;
  std::uint64_t split_seed = 0;
  bool split_seed_set = false;
  int jobs = 1;

  std::filesystem::path importance_model;
  std::filesystem::path compare_model;
  ClusterSpec cluster;
  bool cluster_seed = false;
  int max_samples = 0;  // 0 = all

  int gradcheck_count = 20;
  double gradcheck_epsilon = 1e-4;
  std::uint64_t gradcheck_seed = 0;
  bool gradcheck_seed_set = false;

  /// Sets every seed.
  void override_seed(std::uint64_t seed);
};

/// Throws ValidationError naming the section and key.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

}  // namespace fullface::cli
