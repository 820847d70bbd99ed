#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fullface/geometry.hpp"
#include "fullface/imaging.hpp"

namespace fullface {

/// One face observation in input camera space.
struct Sample {
  std::filesystem::path image;  // resolved path
  std::string image_field;      // path as written in the manifest
  int person_id = 0;
  Landmarks2D landmarks;
  std::array<Vec3, 6> landmarks3d;  // mm, camera coordinates
  HeadPose head;
  CameraModel camera;
  Vec3 gaze_target = Vec3::Zero();  // mm, camera coordinates
  std::optional<ScreenPlane> screen;
  std::optional<Vec2> on_screen_px;

  Vec3 reference() const { return reference_point(landmarks3d); }
  /// Unit vector from the reference point to the gaze target.
  Vec3 gaze_vector() const;
  /// On-screen target in mm; requires a screen.
  Vec2 on_screen_mm() const;
  /// Throws ValidationError describing the first violated invariant.
  void validate() const;
};

/// A sample warped into the normalized camera.
struct NormalizedSample {
  Image image;
  GazeAngles gaze;  // normalized space
  GazeAngles head;  // head forward axis, normalized space
  NormalizationTransform transform;
  Landmarks2D landmarks;  // in the normalized image
};

/// Manifest columns, in order. Screen columns are optional as a block.
std::vector<std::string> manifest_columns(bool with_screen);

/// Parses a manifest CSV; relative image paths resolve against the
/// manifest's directory. Each row is validated and its image header read.
/// Failures name the 1-based data row.
std::vector<Sample> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples);

NormalizedSample normalize_sample(const Sample& s, const Image& img,
                                  const NormalizationSpace& space);
NormalizedSample normalize_sample(const Sample& s, const NormalizationSpace& space);

/// Mirror a sample about the camera's y-z plane: the image is flipped,
/// landmarks mirrored and re-ordered, 3D quantities reflected and the
/// principal point moved so the flipped image stays consistent.
struct FlippedSample {
  Sample sample;
  Image image;
};
FlippedSample flip_sample(const Sample& s, const Image& img);

enum class SplitScheme { loocv, kfold };

struct Fold {
  std::vector<int> train_persons;
  std::vector<int> test_persons;
};

/// Person-disjoint folds. kfold shuffles persons with `seed` and deals them
/// into k groups whose sizes differ by at most one.
std::vector<Fold> make_splits(std::vector<int> persons, SplitScheme scheme, int k,
                              std::uint64_t seed);
std::vector<int> person_ids(const std::vector<Sample>& samples);

}  // namespace fullface
