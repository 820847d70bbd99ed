#include <algorithm>
#include <cmath>
#include <limits>

#include "fullface/error.hpp"
#include "fullface/evaluation.hpp"

namespace fullface {

double angular_error(const Vec3& a, const Vec3& b) {
  if (std::abs(a.norm() - 1.0) > 1e-6 || std::abs(b.norm() - 1.0) > 1e-6) {
    throw ValidationError("angular_error expects unit vectors");
  }
  return rad_to_deg(std::acos(std::clamp(a.dot(b), -1.0, 1.0)));
}

double euclidean_error_2d(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

Vec3 screen_point_to_gaze(const Vec3& origin, const Vec2& screen_mm, const ScreenPlane& screen) {
  const Vec3 d = screen_to_camera(screen_mm, screen) - origin;
  const double n = d.norm();
  if (!(n > 0.0)) throw GeometryError("screen point coincides with the ray origin");
  return d / n;
}

double screen_error_to_angular(const Vec3& origin, const Vec2& estimate_mm, const Vec2& truth_mm,
                               const ScreenPlane& screen) {
  return angular_error(screen_point_to_gaze(origin, estimate_mm, screen),
                       screen_point_to_gaze(origin, truth_mm, screen));
}

double gaze_error_on_screen(const Vec3& origin, const Vec3& estimate, const Vec3& truth,
                            const ScreenPlane& screen) {
  return euclidean_error_2d(intersect_screen(origin, estimate, screen),
                            intersect_screen(origin, truth, screen));
}

Vec3 headpose_as_gaze(const HeadPose& head) { return head.rotation * Vec3(0.0, 0.0, -1.0); }

GazeAngles AngleRegression::apply(const GazeAngles& head) const {
  const Vec2 g = a * Vec2(head.yaw, head.pitch) + b;
  return {g.x(), g.y()};
}

AngleRegression fit_headpose_regression(std::span<const GazeAngles> head,
                                        std::span<const GazeAngles> gaze) {
  if (head.size() != gaze.size()) throw ValidationError("head and gaze counts differ");
  if (head.size() < 3) throw ValidationError("head-pose regression needs at least 3 pairs");
  const auto n = static_cast<Eigen::Index>(head.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) << head[i].yaw, head[i].pitch, 1.0;
    y.row(i) << gaze[i].yaw, gaze[i].pitch;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < 3) throw ValidationError("head-pose regression design is rank deficient");
  const Eigen::MatrixXd coef = qr.solve(y);  // 3 x 2
  AngleRegression r;
  r.a = coef.topRows(2).transpose();
  r.b = coef.row(2).transpose();
  return r;
}

double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double c = 0.0;
  for (double v : values) {
    const double t = sum + v;
    c += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + c;
}

MeanStd mean_std(std::span<const double> values) {
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  const double n = static_cast<double>(finite.size());
  const double mean = compensated_sum(finite) / n;
  for (double& v : finite) v = (v - mean) * (v - mean);
  return {mean, std::sqrt(compensated_sum(finite) / n)};
}

}  // namespace fullface
