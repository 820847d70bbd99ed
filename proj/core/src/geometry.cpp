#include "fullface/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fullface/error.hpp"

namespace fullface {

CameraModel CameraModel::from_intrinsics(double fx, double fy, double cx, double cy, int width,
                                         int height) {
  CameraModel camera;
  camera.projection << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  camera.width = width;
  camera.height = height;
  return camera;
}

void CameraModel::validate() const {
  if (!(projection(0, 0) > 0.0) || !(projection(1, 1) > 0.0)) {
    throw ValidationError("camera focal terms must be strictly positive");
  }
  if (!std::isfinite(projection(0, 1))) throw ValidationError("camera skew is not finite");
  if (!projection.allFinite()) throw ValidationError("camera matrix has non-finite entries");
  if (std::abs(projection.determinant()) < 1e-12) {
    throw ValidationError("camera matrix is singular");
  }
  if (width <= 0 || height <= 0) throw ValidationError("camera image size must be positive");
}

bool is_rotation(const Mat3& r, double tolerance) {
  if (!r.allFinite()) return false;
  const double ortho = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tolerance && std::abs(r.determinant() - 1.0) <= tolerance;
}

void HeadPose::validate() const {
  if (!is_rotation(rotation, 1e-9)) {
    throw ValidationError("head rotation is not orthonormal with determinant +1");
  }
  if (!translation.allFinite()) throw ValidationError("head translation is not finite");
}

NormalizationSpace NormalizationSpace::square(double distance, double focal, int size) {
  NormalizationSpace space;
  space.distance = distance;
  const double c = 0.5 * (size - 1);
  space.camera = CameraModel::from_intrinsics(focal, focal, c, c, size, size);
  return space;
}

void NormalizationSpace::validate() const {
  if (!(distance > 0.0)) throw ValidationError("normalization distance must be positive");
  camera.validate();
}

void ScreenPlane::validate() const {
  if (!is_rotation(rotation, 1e-9)) throw ValidationError("screen rotation is not orthonormal");
  if (!(pixel_pitch.x() > 0.0) || !(pixel_pitch.y() > 0.0)) {
    throw ValidationError("screen pixel pitch must be positive");
  }
}

NormalizationTransform build_normalization(const HeadPose& head, const Vec3& ref_point,
                                           const NormalizationSpace& space,
                                           const CameraModel& input_camera) {
  const double dist = ref_point.norm();
  if (!(dist > 0.0) || !std::isfinite(dist)) {
    throw GeometryError("reference point coincides with the camera origin");
  }
  const Vec3 forward = ref_point / dist;
  const Vec3 head_x = head.rotation.col(0);
  const Vec3 down_raw = forward.cross(head_x);
  if (down_raw.norm() < 1e-6) {
    throw GeometryError("head x-axis is parallel to the viewing direction");
  }
  const Vec3 down = down_raw.normalized();
  const Vec3 right = down.cross(forward).normalized();

  NormalizationTransform t;
  t.rotation.row(0) = right.transpose();
  t.rotation.row(1) = down.transpose();
  t.rotation.row(2) = forward.transpose();
  t.scaling = Mat3::Identity();
  t.scaling(2, 2) = space.distance / dist;
  t.conversion = t.scaling * t.rotation;
  t.image_homography = space.camera.projection * t.conversion * input_camera.projection.inverse();
  return t;
}

Vec3 normalize_gaze(const NormalizationTransform& t, const Vec3& gaze, GazeDirection direction) {
  if (std::abs(t.conversion.determinant()) < 1e-15) {
    throw GeometryError("conversion matrix is singular");
  }
  const Vec3 mapped = direction == GazeDirection::forward ? Vec3(t.conversion * gaze)
                                                          : Vec3(t.conversion.inverse() * gaze);
  const double n = mapped.norm();
  if (!(n > 0.0)) throw GeometryError("gaze vector maps to zero");
  return mapped / n;
}

GazeAngles vector_to_angles(const Vec3& gaze) {
  if (std::abs(gaze.norm() - 1.0) > 1e-6) {
    throw GeometryError("gaze vector is not unit length");
  }
  const double gy = std::clamp(gaze.y(), -1.0, 1.0);
  return {std::atan2(-gaze.x(), -gaze.z()), std::asin(-gy)};
}

Vec3 angles_to_vector(const GazeAngles& angles) {
  if (!(std::abs(angles.pitch) < kPi / 2)) {
    throw GeometryError("pitch outside (-pi/2, pi/2)");
  }
  const double cp = std::cos(angles.pitch);
  return {-cp * std::sin(angles.yaw), -std::sin(angles.pitch), -cp * std::cos(angles.yaw)};
}

Vec2 intersect_screen(const Vec3& origin, const Vec3& gaze, const ScreenPlane& screen,
                      ScreenUnits units) {
  const Vec3 n = screen.normal();
  const double denom = n.dot(gaze);
  if (std::abs(denom) <= 1e-9) throw NoIntersectionError("gaze ray is parallel to the screen");
  const double t = n.dot(screen.translation - origin) / denom;
  if (!(t > 0.0)) throw NoIntersectionError("screen plane lies behind the gaze ray");
  const Vec3 hit = origin + t * gaze;
  const Vec3 local = screen.rotation.transpose() * (hit - screen.translation);
  Vec2 mm(local.x(), local.y());
  if (units == ScreenUnits::mm) return mm;
  return mm.cwiseQuotient(screen.pixel_pitch);
}

Vec3 screen_to_camera(const Vec2& screen_mm, const ScreenPlane& screen) {
  return screen.translation + screen.rotation * Vec3(screen_mm.x(), screen_mm.y(), 0.0);
}

Vec3 reference_point(std::span<const Vec3> landmarks3d) {
  if (landmarks3d.size() != 6) {
    throw ValidationError("reference point needs exactly six landmarks, got " +
                          std::to_string(landmarks3d.size()));
  }
  Vec3 sum = Vec3::Zero();
  for (const auto& p : landmarks3d) sum += p;
  return sum / 6.0;
}

Vec2 project(const CameraModel& camera, const Vec3& point) {
  const Vec3 h = camera.projection * point;
  return {h.x() / h.z(), h.y() / h.z()};
}

Vec2 apply_homography(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

Mat3 rotation_from_euler(double yaw, double pitch, double roll) {
  const Mat3 ry = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rx = Eigen::AngleAxisd(-pitch, Vec3::UnitX()).toRotationMatrix();
  const Mat3 rz = Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix();
  return ry * rx * rz;
}

}  // namespace fullface
