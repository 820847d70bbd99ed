#pragma once

// Camera, head-pose and gaze geometry.
//
// Conventions used throughout the library:
//  * camera frame: x right, y down, z forward (optical axis), millimetres;
//  * gaze angles: pitch = asin(-g.y), yaw = atan2(-g.x, -g.z), so (0, 0)
//    is a gaze pointing along -z, straight back at the camera;
//  * angles are radians; degrees appear only in reported metrics.

#include <Eigen/Core>
#include <Eigen/Dense>

#include <array>
#include <span>

namespace fullface {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics plus the image size they belong to.
struct CameraModel {
  Mat3 projection = Mat3::Identity();
  int width = 0;
  int height = 0;

  static CameraModel from_intrinsics(double fx, double fy, double cx, double cy, int width,
                                     int height);

  /// Throws ValidationError unless focal terms are positive, skew is finite
  /// and the matrix is invertible.
  void validate() const;
};

/// Head rotation (head -> camera) and head origin position in camera coordinates.
struct HeadPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Throws ValidationError unless rotation is orthonormal with det +1 (1e-9).
  void validate() const;
};

/// The virtual camera all faces are warped into.
struct NormalizationSpace {
  double distance = 600.0;  // d_s, mm
  CameraModel camera;

  int output_width() const { return camera.width; }
  int output_height() const { return camera.height; }

  /// Square normalized camera with principal point at the image center.
  static NormalizationSpace square(double distance, double focal, int size);

  void validate() const;
};

struct NormalizationTransform {
  Mat3 rotation;          // R, rows (right, down, forward)
  Mat3 scaling;           // S = diag(1, 1, d_s / |x|)
  Mat3 conversion;        // M = S R
  Mat3 image_homography;  // W = C_s M C_r^-1
};

struct GazeAngles {
  double yaw = 0.0;
  double pitch = 0.0;
};

struct ScreenPlane {
  Mat3 rotation = Mat3::Identity();  // screen -> camera
  Vec3 translation = Vec3::Zero();   // screen origin in camera coordinates, mm
  Vec2 pixel_pitch{1.0, 1.0};        // mm per pixel
  std::array<int, 2> resolution{0, 0};

  Vec3 normal() const { return rotation.col(2); }
  void validate() const;
};

enum class GazeDirection { forward, inverse };
enum class ScreenUnits { mm, px };

NormalizationTransform build_normalization(const HeadPose& head, const Vec3& ref_point,
                                           const NormalizationSpace& space,
                                           const CameraModel& input_camera);

/// Applies M (forward) or M^-1 (inverse) and re-normalizes to unit length.
Vec3 normalize_gaze(const NormalizationTransform& t, const Vec3& gaze, GazeDirection direction);

GazeAngles vector_to_angles(const Vec3& gaze);
Vec3 angles_to_vector(const GazeAngles& angles);

/// Intersects the ray origin + t*gaze (t > 0) with the screen plane and
/// returns the hit point in screen coordinates.
Vec2 intersect_screen(const Vec3& origin, const Vec3& gaze, const ScreenPlane& screen,
                      ScreenUnits units = ScreenUnits::mm);

/// Maps screen-plane coordinates (mm) back to a 3D point in camera coordinates.
Vec3 screen_to_camera(const Vec2& screen_mm, const ScreenPlane& screen);

/// Centroid of exactly six 3D landmarks.
Vec3 reference_point(std::span<const Vec3> landmarks3d);

/// Pinhole projection of a camera-space point to pixel coordinates.
Vec2 project(const CameraModel& camera, const Vec3& point);

Vec2 apply_homography(const Mat3& h, const Vec2& p);

/// Head rotation Ry(yaw) * Rx(-pitch) * Rz(roll). The sign on pitch makes
/// the head forward axis R * (0, 0, -1) have gaze angles (yaw, pitch).
Mat3 rotation_from_euler(double yaw, double pitch, double roll);

bool is_rotation(const Mat3& r, double tolerance = 1e-9);

constexpr double kPi = 3.14159265358979323846;
constexpr double rad_to_deg(double r) { return r * 180.0 / kPi; }
constexpr double deg_to_rad(double d) { return d * kPi / 180.0; }

}  // namespace fullface
