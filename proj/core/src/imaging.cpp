#include "fullface/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fullface/error.hpp"

namespace fullface {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0) throw ValidationError("image size must be non-negative");
  if (channels != 1 && channels != 3) throw ValidationError("image must have 1 or 3 channels");
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image Image::to_gray() const {
  if (channels_ == 1) return *this;
  Image out(width_, height_, 1);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      double s = 0.0;
      for (int c = 0; c < channels_; ++c) s += at(x, y, c);
      out.at(x, y) = s / channels_;
    }
  }
  return out;
}

Image Image::flipped_horizontally() const {
  Image out(width_, height_, channels_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      for (int c = 0; c < channels_; ++c) out.at(x, y, c) = at(width_ - 1 - x, y, c);
    }
  }
  return out;
}

Vec2 Landmarks2D::centroid() const {
  Vec2 sum = Vec2::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

double Landmarks2D::max_pairwise_distance() const {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, (points[i] - points[j]).norm());
    }
  }
  return best;
}

Landmarks2D Landmarks2D::transformed(const Mat3& homography) const {
  Landmarks2D out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.points[i] = apply_homography(homography, points[i]);
  }
  return out;
}

Landmarks2D Landmarks2D::mirrored(int width) const {
  static constexpr std::array<int, 6> kSwap{3, 2, 1, 0, 5, 4};
  Landmarks2D out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2& p = points[kSwap[i]];
    out.points[i] = Vec2(width - 1 - p.x(), p.y());
  }
  return out;
}

void Landmarks2D::validate() const {
  for (const auto& p : points) {
    if (!p.allFinite()) throw ValidationError("landmark coordinates must be finite");
  }
}

namespace {

// Bilinear sample with zero contribution from out-of-bounds neighbours.
inline double sample_bilinear(const Image& img, double x, double y, int c) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  if (fx < -1.0 || fy < -1.0 || fx >= img.width() || fy >= img.height()) return 0.0;
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto px = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= img.width() || yi >= img.height()) return 0.0;
    return img.at(xi, yi, c);
  };
  return (1 - ax) * (1 - ay) * px(x0, y0) + ax * (1 - ay) * px(x0 + 1, y0) +
         (1 - ax) * ay * px(x0, y0 + 1) + ax * ay * px(x0 + 1, y0 + 1);
}

inline double sample_bilinear(const Map2D& map, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  if (fx < -1.0 || fy < -1.0 || fx >= map.width || fy >= map.height) return 0.0;
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto px = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= map.width || yi >= map.height) return 0.0;
    return map.at(xi, yi);
  };
  return (1 - ax) * (1 - ay) * px(x0, y0) + ax * (1 - ay) * px(x0 + 1, y0) +
         (1 - ax) * ay * px(x0, y0 + 1) + ax * ay * px(x0 + 1, y0 + 1);
}

Mat3 invert_checked(const Mat3& h) {
  if (!h.allFinite() || std::abs(h.determinant()) < 1e-14) {
    throw GeometryError("warp matrix is singular");
  }
  return h.inverse();
}

Mat3 to_homogeneous(const Affine2& a) {
  Mat3 h = Mat3::Identity();
  h.topRows<2>() = a;
  return h;
}

}  // namespace

Image warp_perspective(const Image& img, const Mat3& h, int out_width, int out_height) {
  const Mat3 inv = invert_checked(h);
  Image out(out_width, out_height, img.channels());
  for (int v = 0; v < out_height; ++v) {
    for (int u = 0; u < out_width; ++u) {
      const Vec3 s = inv * Vec3(u, v, 1.0);
      if (!(std::abs(s.z()) > 0.0)) continue;
      const double x = s.x() / s.z();
      const double y = s.y() / s.z();
      for (int c = 0; c < img.channels(); ++c) out.at(u, v, c) = sample_bilinear(img, x, y, c);
    }
  }
  return out;
}

Image warp_affine(const Image& img, const Affine2& a, int out_width, int out_height) {
  return warp_perspective(img, to_homogeneous(a), out_width, out_height);
}

Map2D warp_affine(const Map2D& map, const Affine2& a, int out_width, int out_height) {
  const Mat3 inv = invert_checked(to_homogeneous(a));
  Map2D out(out_width, out_height);
  for (int v = 0; v < out_height; ++v) {
    for (int u = 0; u < out_width; ++u) {
      const Vec3 s = inv * Vec3(u, v, 1.0);
      out.at(u, v) = sample_bilinear(map, s.x(), s.y());
    }
  }
  return out;
}

Rect face_crop_rect(const Landmarks2D& lm, double scale) {
  lm.validate();
  const double side = scale * lm.max_pairwise_distance();
  if (!(side > 0.0)) throw GeometryError("all landmarks coincide");
  const Vec2 c = lm.centroid();
  return {c.x() - 0.5 * side, c.y() - 0.5 * side, side, side};
}

Mat3 crop_homography(const Rect& rect, int out_width, int out_height) {
  const double kx = out_width / rect.width;
  const double ky = out_height / rect.height;
  Mat3 h;
  h << kx, 0.0, -kx * rect.x - 0.5, 0.0, ky, -ky * rect.y - 0.5, 0.0, 0.0, 1.0;
  return h;
}

Image crop_face(const Image& img, const Landmarks2D& lm, double scale, int out_size) {
  const Rect rect = face_crop_rect(lm, scale);
  return warp_perspective(img, crop_homography(rect, out_size, out_size), out_size, out_size);
}

Rect eye_crop_rect(const Vec2& inner, const Vec2& outer, double factor, int out_width,
                   int out_height) {
  const double dist = (inner - outer).norm();
  if (!(dist > 0.0)) throw GeometryError("eye corners coincide");
  const double w = factor * dist;
  const double h = w * static_cast<double>(out_height) / out_width;
  const Vec2 c = 0.5 * (inner + outer);
  return {c.x() - 0.5 * w, c.y() - 0.5 * h, w, h};
}

Image crop_eye(const Image& img, const Vec2& inner, const Vec2& outer, double factor,
               int out_width, int out_height) {
  const Rect rect = eye_crop_rect(inner, outer, factor, out_width, out_height);
  return warp_perspective(img, crop_homography(rect, out_width, out_height), out_width,
                          out_height);
}

int FaceGrid::count() const {
  return static_cast<int>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

FaceGrid face_grid(int frame_width, int frame_height, const Rect& face_bbox, int grid) {
  if (frame_width <= 0 || frame_height <= 0 || grid <= 0) {
    throw ValidationError("face grid needs a non-empty frame");
  }
  FaceGrid g;
  g.size = grid;
  g.cells.assign(static_cast<std::size_t>(grid) * grid, 0);
  const double cw = static_cast<double>(frame_width) / grid;
  const double ch = static_cast<double>(frame_height) / grid;
  for (int row = 0; row < grid; ++row) {
    for (int col = 0; col < grid; ++col) {
      const Vec2 center((col + 0.5) * cw, (row + 0.5) * ch);
      if (face_bbox.contains(center)) g.cells[static_cast<std::size_t>(row) * grid + col] = 1;
    }
  }
  return g;
}

void fill_rect(Image& img, const Rect& rect, double value) {
  // Pixels whose centers lie inside the half-open rectangle.
  const int x0 = std::max(0, static_cast<int>(std::ceil(rect.x)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(rect.y)));
  const int x1 = std::min(img.width(), static_cast<int>(std::ceil(rect.x + rect.width)));
  const int y1 = std::min(img.height(), static_cast<int>(std::ceil(rect.y + rect.height)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      for (int c = 0; c < img.channels(); ++c) img.at(x, y, c) = value;
    }
  }
}

std::array<Rect, 2> eye_block_rects(const Landmarks2D& lm) {
  using L = Landmarks2D;
  return {eye_crop_rect(lm.points[L::inner_left], lm.points[L::outer_left], 1.5, 60, 36),
          eye_crop_rect(lm.points[L::inner_right], lm.points[L::outer_right], 1.5, 60, 36)};
}

Image block_eyes(const Image& img, const Landmarks2D& lm, double gray) {
  Image out = img;
  for (const Rect& r : eye_block_rects(lm)) fill_rect(out, r, gray);
  return out;
}

Map2D box_filter(const Map2D& map, int radius) {
  if (radius < 0) throw ValidationError("box filter radius must be non-negative");
  if (radius == 0) return map;
  const int w = map.width;
  const int h = map.height;
  // Summed-area table with a zero border row/column.
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto s = [&](int x, int y) -> double& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) s(x + 1, y + 1) = map.at(x, y) + s(x, y + 1) + s(x + 1, y) - s(x, y);
  }
  Map2D out(w, h);
  for (int y = 0; y < h; ++y) {
    const int ya = std::max(0, y - radius);
    const int yb = std::min(h, y + radius + 1);
    for (int x = 0; x < w; ++x) {
      const int xa = std::max(0, x - radius);
      const int xb = std::min(w, x + radius + 1);
      const double sum = s(xb, yb) - s(xa, yb) - s(xb, ya) + s(xa, ya);
      out.at(x, y) = sum / static_cast<double>((xb - xa) * (yb - ya));
    }
  }
  return out;
}

double half_intensity_diff(const Image& img) {
  const Image gray = img.to_gray();
  const int half = gray.width() / 2;
  const int right_start = (gray.width() + 1) / 2;
  if (half == 0) return 0.0;
  double left = 0.0;
  double right = 0.0;
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < half; ++x) left += gray.at(x, y);
    for (int x = right_start; x < gray.width(); ++x) right += gray.at(x, y);
  }
  const double n = static_cast<double>(half) * gray.height();
  return right / n - left / n;
}

Affine2 affine_from_3pts(std::span<const Vec2, 3> src, std::span<const Vec2, 3> dst) {
  Mat3 s;
  Eigen::Matrix<double, 2, 3> d;
  double extent = 0.0;
  for (int i = 0; i < 3; ++i) {
    s.col(i) << src[i].x(), src[i].y(), 1.0;
    d.col(i) = dst[i];
    for (int j = 0; j < 3; ++j) extent = std::max(extent, (src[i] - src[j]).norm());
  }
  if (!(extent > 0.0) || std::abs(s.determinant()) <= 1e-12 * extent * extent) {
    throw GeometryError("affine source points are collinear");
  }
  return d * s.inverse();
}

Vec2 apply_affine(const Affine2& a, const Vec2& p) {
  return a.leftCols<2>() * p + a.col(2);
}

}  // namespace fullface
