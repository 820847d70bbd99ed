#include "fullface/importance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "fullface/error.hpp"
#include "fullface/image_io.hpp"

namespace fullface {

namespace {

Vec3 angles_vector_clamped(const std::array<double, 2>& a) {
  const double limit = 0.5 * kPi - 1e-6;
  return angles_to_vector({a[0], std::clamp(a[1], -limit, limit)});
}

// Index of the mask whose center is closest to pixel coordinate p.
int nearest_cell(const std::vector<int>& positions, int mask, int p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double d = std::abs(p - (positions[i] + 0.5 * mask - 0.5));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Map2D gray_map(const Image& img) {
  const Image g = img.channels() == 1 ? img : img.to_gray();
  Map2D m(g.width(), g.height());
  std::copy(g.pixels().begin(), g.pixels().end(), m.values.begin());
  return m;
}

}  // namespace

std::array<double, 2> ModelPredictor::predict(const Image& img) const {
  return model_.predict(image_to_tensor(img, model_.config.input_channels));
}

OcclusionOptions OcclusionOptions::scaled_for(int image_size) {
  OcclusionOptions o;
  o.mask_size = std::max(1, static_cast<int>(std::lround(64.0 * image_size / 448.0)));
  o.stride = std::max(1, o.mask_size / 2);
  return o;
}

std::vector<int> mask_positions(int extent, int mask, int stride) {
  if (mask > extent) throw ValidationError("occlusion mask is larger than the image");
  if (mask < 1 || stride < 1) throw ValidationError("occlusion mask and stride must be positive");
  const int steps = (extent - mask + stride - 1) / stride;
  std::vector<int> out;
  for (int i = 0; i <= steps; ++i) out.push_back(std::min(i * stride, extent - mask));
  return out;
}

ImportanceMap occlusion_importance(const GazePredictor& predictor, const Image& img,
                                   const GazeAngles& truth, const OcclusionOptions& options) {
  ImportanceMap m;
  m.mask_size = options.mask_size;
  m.stride = options.stride;
  m.xs = mask_positions(img.width(), options.mask_size, options.stride);
  m.ys = mask_positions(img.height(), options.mask_size, options.stride);
  const Vec3 t = angles_to_vector(truth);
  m.base_error = angular_error(angles_vector_clamped(predictor.predict(img)), t);

  m.cells = Map2D(static_cast<int>(m.xs.size()), static_cast<int>(m.ys.size()));
  for (std::size_t j = 0; j < m.ys.size(); ++j) {
    for (std::size_t i = 0; i < m.xs.size(); ++i) {
      Image masked = img;
      fill_rect(masked, {static_cast<double>(m.xs[i]) - 0.5, static_cast<double>(m.ys[j]) - 0.5,
                         static_cast<double>(options.mask_size), static_cast<double>(options.mask_size)},
                options.mask_value);
      const double e = angular_error(angles_vector_clamped(predictor.predict(masked)), t);
      m.cells.at(static_cast<int>(i), static_cast<int>(j)) = e - m.base_error;
    }
  }

  Map2D up(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    const int cy = nearest_cell(m.ys, options.mask_size, y);
    for (int x = 0; x < img.width(); ++x) {
      up.at(x, y) = m.cells.at(nearest_cell(m.xs, options.mask_size, x), cy);
    }
  }
  m.map = box_filter(up, options.stride / 2);
  return m;
}

double importance_mass_in(const ImportanceMap& m, const Rect& region) {
  double inside = 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < m.ys.size(); ++j) {
    for (std::size_t i = 0; i < m.xs.size(); ++i) {
      const double v = std::abs(m.cells.at(static_cast<int>(i), static_cast<int>(j)));
      total += v;
      const bool overlaps = m.xs[i] < region.x + region.width && m.xs[i] + m.mask_size > region.x &&
                            m.ys[j] < region.y + region.height && m.ys[j] + m.mask_size > region.y;
      if (overlaps) inside += v;
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

ClusterFeature parse_cluster_feature(const std::string& text) {
  if (text == "illumination_diff") return ClusterFeature::illumination_diff;
  if (text == "gaze_yaw") return ClusterFeature::gaze_yaw;
  if (text == "gaze_pitch") return ClusterFeature::gaze_pitch;
  if (text == "head_yaw") return ClusterFeature::head_yaw;
  if (text == "head_pitch") return ClusterFeature::head_pitch;
  throw ValidationError("unknown cluster feature '" + text + "'");
}

std::string to_string(ClusterFeature f) {
  switch (f) {
    case ClusterFeature::illumination_diff: return "illumination_diff";
    case ClusterFeature::gaze_yaw: return "gaze_yaw";
    case ClusterFeature::gaze_pitch: return "gaze_pitch";
    case ClusterFeature::head_yaw: return "head_yaw";
    case ClusterFeature::head_pitch: return "head_pitch";
  }
  return "?";
}

double cluster_feature_value(const ClusterInput& in, ClusterFeature feature) {
  switch (feature) {
    case ClusterFeature::illumination_diff: return half_intensity_diff(in.image);
    case ClusterFeature::gaze_yaw: return in.gaze.yaw;
    case ClusterFeature::gaze_pitch: return in.gaze.pitch;
    case ClusterFeature::head_yaw: return in.head.yaw;
    case ClusterFeature::head_pitch: return in.head.pitch;
  }
  return 0.0;
}

std::array<Vec2, 3> alignment_points(const Landmarks2D& lm) {
  using L = Landmarks2D;
  return {0.5 * (lm.points[L::outer_left] + lm.points[L::inner_left]),
          0.5 * (lm.points[L::inner_right] + lm.points[L::outer_right]),
          0.5 * (lm.points[L::mouth_left] + lm.points[L::mouth_right])};
}

ClusterResult cluster_and_average(const std::vector<ClusterInput>& inputs, const ClusterSpec& spec) {
  if (spec.k < 1) throw ValidationError("cluster count must be at least 1");
  if (static_cast<std::size_t>(spec.k) > inputs.size()) {
    throw ValidationError("more clusters than samples");
  }
  const int w = inputs.front().image.width();
  const int h = inputs.front().image.height();
  const std::size_t n_err = inputs.front().errors.size();
  for (const auto& in : inputs) {
    if (in.image.width() != w || in.image.height() != h || in.map.width != w || in.map.height != h) {
      throw ValidationError("cluster inputs must share one image size");
    }
    if (in.errors.size() != n_err) throw ValidationError("cluster inputs disagree on model count");
  }

  std::vector<double> features;
  for (const auto& in : inputs) features.push_back(cluster_feature_value(in, spec.feature));
  ClusterResult result;
  result.kmeans = kmeans_1d(features, {spec.k, spec.seed, 100, 8});

  std::array<Vec2, 3> mean{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  for (const auto& in : inputs) {
    const auto p = alignment_points(in.landmarks);
    for (int i = 0; i < 3; ++i) mean[i] += p[i] / static_cast<double>(inputs.size());
  }
  result.mean_triangle = mean;

  result.clusters.resize(static_cast<std::size_t>(spec.k));
  std::vector<Map2D> face_sum(spec.k, Map2D(w, h));
  for (int c = 0; c < spec.k; ++c) {
    auto& cl = result.clusters[c];
    cl.centroid = result.kmeans.centroids[c];
    cl.mean_map = Map2D(w, h);
    cl.mean_errors.assign(n_err, 0.0);
  }
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const auto& in = inputs[s];
    auto& cl = result.clusters[result.kmeans.assignment[s]];
    const auto src = alignment_points(in.landmarks);
    const Affine2 a = affine_from_3pts(src, mean);
    const Map2D face = warp_affine(gray_map(in.image), a, w, h);
    const Map2D map = warp_affine(in.map, a, w, h);
    Map2D& fs = face_sum[result.kmeans.assignment[s]];
    for (std::size_t i = 0; i < fs.values.size(); ++i) {
      fs.values[i] += face.values[i];
      cl.mean_map.values[i] += map.values[i];
    }
    for (std::size_t e = 0; e < n_err; ++e) cl.mean_errors[e] += in.errors[e];
    ++cl.count;
  }
  for (int c = 0; c < spec.k; ++c) {
    auto& cl = result.clusters[c];
    cl.mean_face = Image(w, h, 1);
    if (cl.count == 0) {
      for (double& e : cl.mean_errors) e = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double inv = 1.0 / cl.count;
    for (std::size_t i = 0; i < cl.mean_map.values.size(); ++i) {
      cl.mean_map.values[i] *= inv;
      cl.mean_face.pixels()[i] = std::clamp(face_sum[c].values[i] * inv, 0.0, 1.0);
    }
    for (double& e : cl.mean_errors) e *= inv;
  }
  return result;
}

void write_cluster_outputs(const std::filesystem::path& dir, const ClusterResult& result,
                           const ClusterSpec& spec, const std::vector<std::string>& model_names) {
  std::filesystem::create_directories(dir);
  double scale = 0.0;
  for (const auto& c : result.clusters) {
    for (double v : c.mean_map.values) scale = std::max(scale, v);
  }
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t i = 0; i < result.clusters.size(); ++i) {
    const auto& c = result.clusters[i];
    const std::string stem = "cluster_" + std::to_string(i);
    write_pgm(dir / (stem + "_importance.pgm"), c.mean_map, scale);
    Map2D face(c.mean_face.width(), c.mean_face.height());
    std::copy(c.mean_face.pixels().begin(), c.mean_face.pixels().end(), face.values.begin());
    write_pgm(dir / (stem + "_face.pgm"), face, 1.0);
    nlohmann::json errors = nlohmann::json::object();
    for (std::size_t e = 0; e < c.mean_errors.size(); ++e) {
      const std::string name = e < model_names.size() ? model_names[e] : "model_" + std::to_string(e);
      errors[name] = std::isfinite(c.mean_errors[e]) ? nlohmann::json(c.mean_errors[e]) : nlohmann::json();
    }
    clusters.push_back({{"index", i},
                        {"centroid", c.centroid},
                        {"count", c.count},
                        {"mean_error_deg", errors},
                        {"importance_map", stem + "_importance.pgm"},
                        {"mean_face", stem + "_face.pgm"}});
  }
  const nlohmann::json doc{{"feature", to_string(spec.feature)},
                           {"k", spec.k},
                           {"seed", spec.seed},
                           {"empty_clusters", result.kmeans.empty_clusters},
                           {"objective", result.kmeans.objective},
                           {"map_scale_deg", scale},
                           {"clusters", clusters}};
  std::ofstream out(dir / "clusters.json");
  if (!out) throw IoError("cannot write " + (dir / "clusters.json").string());
  out << doc.dump(2) << '\n';
}

}  // namespace fullface
