#pragma once

// Parametric face renderer used as a ground-truth oracle. Faces are planar
// features (eyes, irises, brows, mouth) placed on a head in 3D, projected by
// a pinhole camera and rasterized with anti-aliased ellipses.

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "fullface/dataset.hpp"
#include "fullface/geometry.hpp"
#include "fullface/imaging.hpp"

namespace fullface {

/// Per-person face layout in head coordinates (mm, x right, y down, the
/// face looking along -z).
struct PersonGeometry {
  double eye_offset = 31.0;  // eye center |x|
  double eye_y = -8.0;
  double eye_width = 28.0;  // corner to corner
  double mouth_half_width = 25.0;
  double mouth_y = 58.0;
  double face_z = -85.0;  // depth of the feature plane
  double head_rx = 78.0;  // outline semi-axes
  double head_ry = 100.0;
  double skin = 0.62;
  double brow_lift = 6.0;  // gap between the eye-block box and the brow

  /// Deterministic in the id alone.
  static PersonGeometry for_person(int person_id);

  /// Outer-left, inner-left, inner-right, outer-right eye corners and the
  /// two mouth corners ("left" as seen in the image), in head coordinates.
  std::array<Vec3, 6> landmarks_head() const;
};

struct RenderParams {
  HeadPose head;
  GazeAngles relative_gaze;  // eyes relative to the head frame
  double illumination = 0.0;  // left-right shading, positive brightens the right side
  double noise_std = 0.0;
  Vec2 brow_jitter = Vec2::Zero();  // mm
};

/// Iris travel per radian of relative gaze, and brow travel (mm / rad).
inline constexpr double kIrisGain = 16.0;
inline constexpr double kBrowGain = 14.0;

/// Renders a single-channel face image. `rng` is only drawn from when
/// noise_std > 0.
Image render_face(const PersonGeometry& person, const CameraModel& camera,
                  const RenderParams& params, std::mt19937_64& rng);

/// Camera-space landmarks for a posed head.
std::array<Vec3, 6> posed_landmarks(const PersonGeometry& person, const HeadPose& head);

/// Screen 1920 x 1080 px at 0.28 mm pitch, in the camera's z = 0 plane,
/// top edge 10 mm below the camera.
ScreenPlane default_screen();

struct SynthConfig {
  int persons = 15;
  int samples_per_person = 200;
  int image_size = 128;
  double focal = 300.0;
  GazeAngles gaze_range{0.35, 0.3};  // half-ranges, relative to the head
  GazeAngles head_range{0.4, 0.3};
  double roll_range = 0.1;
  double illumination_range = 1.0;
  double noise_std = 0.02;
  /// Fraction of head rotation the eyes counter-rotate by.
  double eye_head_coupling = 0.3;
  double distance_min = 500.0;
  double distance_max = 700.0;
  double lateral_offset = 40.0;
  double brow_jitter_std = 1.0;
  std::uint64_t seed = 1;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

struct SynthItem {
  Sample sample;
  Image image;
  double illumination = 0.0;
};

/// One sample, reproducible from (cfg.seed, person, index) alone.
SynthItem synth_sample(const SynthConfig& cfg, int person_id, int index);

/// Writes person_<id>/<index>.png and manifest.csv under `out_dir`.
std::vector<Sample> synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace fullface
