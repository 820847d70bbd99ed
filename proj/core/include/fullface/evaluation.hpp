#pragma once

// Error metrics, head-pose baselines and 1D k-means.

#include <cstdint>
#include <span>
#include <vector>

#include "fullface/geometry.hpp"

namespace fullface {

/// Angle between two unit vectors in degrees. Throws ValidationError on
/// non-unit input (tolerance 1e-6).
double angular_error(const Vec3& a, const Vec3& b);
double euclidean_error_2d(const Vec2& a, const Vec2& b);

/// Unit ray from `origin` towards the screen point `screen_mm`.
Vec3 screen_point_to_gaze(const Vec3& origin, const Vec2& screen_mm, const ScreenPlane& screen);
/// Angular error (degrees) between the rays to two screen points.
double screen_error_to_angular(const Vec3& origin, const Vec2& estimate_mm, const Vec2& truth_mm,
                               const ScreenPlane& screen);
/// Distance (mm) between the screen intersections of two gaze rays.
double gaze_error_on_screen(const Vec3& origin, const Vec3& estimate, const Vec3& truth,
                            const ScreenPlane& screen);

/// The head's forward axis, rotation * (0, 0, -1).
Vec3 headpose_as_gaze(const HeadPose& head);

/// gaze = a * head + b on (yaw, pitch).
struct AngleRegression {
  Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  Vec2 b = Vec2::Zero();

  GazeAngles apply(const GazeAngles& head) const;
};

/// Least-squares affine fit. Throws ValidationError with fewer than three
/// pairs or a rank-deficient design.
AngleRegression fit_headpose_regression(std::span<const GazeAngles> head,
                                        std::span<const GazeAngles> gaze);

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
/// Non-finite entries are skipped; NaN for an empty selection.
MeanStd mean_std(std::span<const double> values);

struct KMeansResult {
  std::vector<int> assignment;     // cluster per value, clusters ordered by centroid
  std::vector<double> centroids;   // ascending
  std::vector<int> sizes;
  double objective = 0.0;          // sum of squared distances to the assigned centroid
  std::vector<double> objective_history;  // after each Lloyd iteration of the chosen run
  int empty_clusters = 0;
};

struct KMeansOptions {
  int k = 3;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  int restarts = 8;  // k-means++ starts in addition to the exact 1D start
};

/// Lloyd's algorithm on scalars. An empty cluster keeps its previous
/// centroid and is counted in empty_clusters. Throws ValidationError when
/// k < 1 or k exceeds the number of values.
KMeansResult kmeans_1d(std::span<const double> values, const KMeansOptions& options);

}  // namespace fullface
