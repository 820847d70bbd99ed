#pragma once

// Occlusion-based region importance and condition clustering.

#include <filesystem>
#include <string>
#include <vector>

#include "fullface/evaluation.hpp"
#include "fullface/imaging.hpp"
#include "fullface/network.hpp"

namespace fullface {

/// Anything mapping an input image to normalized gaze angles (yaw, pitch).
class GazePredictor {
 public:
  virtual ~GazePredictor() = default;
  virtual std::array<double, 2> predict(const Image& img) const = 0;
};

class ModelPredictor final : public GazePredictor {
 public:
  explicit ModelPredictor(const TrainedModel& model) : model_(model) {}
  std::array<double, 2> predict(const Image& img) const override;

 private:
  const TrainedModel& model_;
};

struct OcclusionOptions {
  int mask_size = 64;
  int stride = 32;
  double mask_value = 0.5;

  /// 64 / 32 at 448 px, scaled to `image_size` (mask rounded, stride = mask / 2).
  static OcclusionOptions scaled_for(int image_size);
};

/// Top-left mask offsets along one axis: min(i * stride, extent - mask).
std::vector<int> mask_positions(int extent, int mask, int stride);

struct ImportanceMap {
  Map2D cells;  // one value per mask position, degrees
  Map2D map;    // image-sized, nearest-cell upsampled then box-filtered
  std::vector<int> xs, ys;
  int mask_size = 0;
  int stride = 0;
  double base_error = 0.0;  // unmasked angular error
};

/// Cell value = angular error with the mask applied minus the unmasked error.
ImportanceMap occlusion_importance(const GazePredictor& predictor, const Image& img,
                                   const GazeAngles& truth, const OcclusionOptions& options);

/// Share of |cell mass| in mask positions that overlap `region`.
double importance_mass_in(const ImportanceMap& m, const Rect& region);

enum class ClusterFeature { illumination_diff, gaze_yaw, gaze_pitch, head_yaw, head_pitch };
ClusterFeature parse_cluster_feature(const std::string& text);
std::string to_string(ClusterFeature f);

struct ClusterSpec {
  ClusterFeature feature = ClusterFeature::illumination_diff;
  int k = 3;
  std::uint64_t seed = 0;
};

struct ClusterInput {
  Image image;
  Landmarks2D landmarks;
  Map2D map;
  GazeAngles gaze;
  GazeAngles head;
  std::vector<double> errors;  // one entry per compared model
};

double cluster_feature_value(const ClusterInput& in, ClusterFeature feature);

struct ClusterSummary {
  double centroid = 0.0;
  int count = 0;
  Image mean_face;
  Map2D mean_map;
  std::vector<double> mean_errors;
};

struct ClusterResult {
  std::vector<ClusterSummary> clusters;  // ascending centroid
  KMeansResult kmeans;
  std::array<Vec2, 3> mean_triangle;
};

/// Eye-corner midpoints and mouth-corner midpoint.
std::array<Vec2, 3> alignment_points(const Landmarks2D& lm);

/// Clusters by the chosen scalar feature, aligns every image and map to the
/// mean landmark triangle and averages per cluster.
ClusterResult cluster_and_average(const std::vector<ClusterInput>& inputs, const ClusterSpec& spec);

/// Writes cluster_<i>_importance.pgm and cluster_<i>_face.pgm per cluster
/// and a clusters.json sidecar. Maps share one scale; negative values clamp to 0.
void write_cluster_outputs(const std::filesystem::path& dir, const ClusterResult& result,
                           const ClusterSpec& spec, const std::vector<std::string>& model_names);

}  // namespace fullface
