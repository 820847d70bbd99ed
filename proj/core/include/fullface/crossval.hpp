#pragma once

// Cross-subject evaluation driver and input pipelines.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fullface/dataset.hpp"
#include "fullface/evaluation.hpp"
#include "fullface/network.hpp"

namespace fullface {

enum class Task { gaze3d, screen2d };
enum class InputVariant { face, eyes_blocked, single_eye };

Task parse_task(const std::string& text);
InputVariant parse_variant(const std::string& text);
std::string to_string(Task task);
std::string to_string(InputVariant variant);

/// Normalized camera used for the synthetic experiments: d_s = 600 mm and a
/// focal length putting the inter-ocular distance at about 40% of the image.
NormalizationSpace default_space(int size = 64);

/// Network input image for one sample. 3D task: the normalized face
/// (optionally with eyes blocked) or a 60:36 eye crop centered on a gray
/// square canvas. 2D task: the same pipelines on the raw image, starting
/// from the landmark face crop.
Image variant_image(const Sample& s, const Image& raw, Task task, InputVariant variant,
                    const NormalizationSpace& space, int input_size);

/// Everything the evaluation needs from one sample, precomputed.
struct PreparedSample {
  std::size_t index = 0;  // position in the manifest
  int person_id = 0;
  Image image;            // network input image
  Tensor input;
  std::array<double, 2> target{};  // normalized (yaw, pitch) or on-screen mm
  Vec3 reference = Vec3::Zero();
  Vec3 gaze = Vec3::Zero();  // camera space
  NormalizationTransform transform;
  GazeAngles gaze_normalized;
  GazeAngles head_normalized;
  Landmarks2D landmarks;  // in `image`
  HeadPose head;
  std::optional<ScreenPlane> screen;
  std::optional<Vec2> screen_mm;
};

struct PrepareOptions {
  Task task = Task::gaze3d;
  InputVariant variant = InputVariant::face;
  NormalizationSpace space = default_space();
  int input_size = 64;
  int input_channels = 1;
  int jobs = 1;
};

/// Loads and converts every sample. Output order follows the input.
std::vector<PreparedSample> prepare_samples(const std::vector<Sample>& samples,
                                            const PrepareOptions& options);

/// Camera-space gaze for a prediction in the task's target units.
Vec3 prediction_to_gaze(const PreparedSample& s, Task task, const std::array<double, 2>& pred);

struct SampleError {
  std::size_t index = 0;
  int person_id = 0;
  double angular_deg = 0.0;
  double euclid_mm = 0.0;  // NaN without a usable screen intersection
};

struct Baselines {
  double headpose_naive_deg = 0.0;
  double headpose_regression_deg = 0.0;
  double mean_predictor_deg = 0.0;
  double mean_predictor_mm = 0.0;
};

struct FoldResult {
  int fold = 0;
  std::vector<int> test_persons;
  std::vector<SampleError> errors;
  MeanStd angular;
  MeanStd euclid;
  Baselines baselines;
  std::vector<EpochLog> log;
};

struct CrossValSummary {
  MeanStd angular;  // mean over folds of the fold means
  MeanStd euclid;
  Baselines baselines;
};

struct CrossValResult {
  std::vector<FoldResult> folds;
  CrossValSummary summary;
};

struct CrossValOptions {
  Task task = Task::gaze3d;
  ModelConfig model = ModelConfig::desk();
  int jobs = 1;
};

/// Trains one model per fold on the training persons and scores the test
/// persons, together with the head-pose and mean-predictor baselines.
/// Folds may run concurrently; results do not depend on `jobs`.
CrossValResult run_crossvalidation(const std::vector<PreparedSample>& samples,
                                   const std::vector<Fold>& folds, const CrossValOptions& options);

/// Baselines alone (no network training).
Baselines evaluate_baselines(const std::vector<const PreparedSample*>& train,
                             const std::vector<const PreparedSample*>& test, Task task);

/// Columns: sample,person_id,angular_deg,euclid_mm.
void write_fold_csv(const std::filesystem::path& path, const FoldResult& fold);
/// One row per fold plus a final "mean" row.
void write_summary_csv(const std::filesystem::path& path, const CrossValResult& result);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads and rethrows the
/// first failure by index.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace fullface
