#pragma once

// Image containers and the image-space procedures of the pipeline. Pixel
// centers sit on integer coordinates; samples outside the source are zero.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fullface/geometry.hpp"

namespace fullface {

/// Row-major, interleaved, values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }

  double& at(int x, int y, int c = 0) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> pixels() { return pixels_; }
  std::span<const double> pixels() const { return pixels_; }

  /// Channel mean, producing a single-channel image.
  Image to_gray() const;
  Image flipped_horizontally() const;

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> pixels_;
};

/// Dense real-valued 2D array (error maps, importance maps).
struct Map2D {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Map2D() = default;
  Map2D(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Axis-aligned rectangle in continuous pixel coordinates.
struct Rect {
  double x = 0.0;  // left
  double y = 0.0;  // top
  double width = 0.0;
  double height = 0.0;

  Vec2 center() const { return {x + 0.5 * width, y + 0.5 * height}; }
  bool contains(const Vec2& p) const {
    return p.x() >= x && p.x() < x + width && p.y() >= y && p.y() < y + height;
  }
};

/// Six 2D landmarks: outer-left eye corner, inner-left, inner-right,
/// outer-right, left mouth corner, right mouth corner ("left" = image left).
struct Landmarks2D {
  std::array<Vec2, 6> points;

  enum Index { outer_left = 0, inner_left = 1, inner_right = 2, outer_right = 3,
               mouth_left = 4, mouth_right = 5 };

  Vec2 centroid() const;
  double max_pairwise_distance() const;
  Landmarks2D transformed(const Mat3& homography) const;
  /// Mirror x -> (width - 1 - x) and swap left/right so the order stays canonical.
  Landmarks2D mirrored(int width) const;
  void validate() const;
};

using Affine2 = Eigen::Matrix<double, 2, 3>;

/// Inverse-mapped bilinear warp: out(u, v) = img(h^-1 (u, v, 1)).
Image warp_perspective(const Image& img, const Mat3& h, int out_width, int out_height);
Image warp_affine(const Image& img, const Affine2& a, int out_width, int out_height);
Map2D warp_affine(const Map2D& map, const Affine2& a, int out_width, int out_height);

/// Square face box: side scale * max landmark distance, centered at the centroid.
Rect face_crop_rect(const Landmarks2D& lm, double scale = 1.5);
/// Homography taking a crop rectangle onto an out_width x out_height image.
Mat3 crop_homography(const Rect& rect, int out_width, int out_height);
Image crop_face(const Image& img, const Landmarks2D& lm, double scale = 1.5, int out_size = 448);

/// Eye box centered at the corner midpoint, width factor * corner distance,
/// height from the output aspect ratio.
Rect eye_crop_rect(const Vec2& inner, const Vec2& outer, double factor, int out_width,
                   int out_height);
Image crop_eye(const Image& img, const Vec2& inner, const Vec2& outer, double factor,
               int out_width, int out_height);

/// Binary occupancy grid; a cell is set when its center lies in face_bbox.
struct FaceGrid {
  int size = 25;
  std::vector<std::uint8_t> cells;
  std::uint8_t at(int col, int row) const { return cells[static_cast<std::size_t>(row) * size + col]; }
  int count() const;
};
FaceGrid face_grid(int frame_width, int frame_height, const Rect& face_bbox, int grid = 25);

/// Fills both eye boxes (single-eye crop geometry: 1.5x corner distance,
/// 60:36 aspect) with a constant gray value.
Image block_eyes(const Image& img, const Landmarks2D& lm, double gray = 0.5);
std::array<Rect, 2> eye_block_rects(const Landmarks2D& lm);

/// Mean over the (2r+1)^2 window, clipped at the border.
Map2D box_filter(const Map2D& map, int radius);

/// mean(right half) - mean(left half) of the gray image; odd center column excluded.
double half_intensity_diff(const Image& img);

/// Exact affine map sending src[i] to dst[i]; throws GeometryError when
/// src is collinear.
Affine2 affine_from_3pts(std::span<const Vec2, 3> src, std::span<const Vec2, 3> dst);
Vec2 apply_affine(const Affine2& a, const Vec2& p);

/// Sets every pixel whose center lies inside `rect`.
void fill_rect(Image& img, const Rect& rect, double value);

}  // namespace fullface
