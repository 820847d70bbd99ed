#include "fullface/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fullface/error.hpp"
#include "fullface/image_io.hpp"

namespace fullface {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Mat2 = Eigen::Matrix2d;

// Ellipse p = center + A cos t + B sin t in image space.
struct Ellipse {
  Vec2 center;
  Mat2 axes;  // columns A, B
};

// Projects a planar 3D ellipse (head coordinates) to its affine image approximation.
Ellipse project_ellipse(const CameraModel& cam, const HeadPose& head, const Vec3& c, const Vec3& a,
                        const Vec3& b) {
  auto to_img = [&](const Vec3& p) { return project(cam, head.rotation * p + head.translation); };
  Ellipse e;
  e.center = to_img(c);
  e.axes.col(0) = 0.5 * (to_img(c + a) - to_img(c - a));
  e.axes.col(1) = 0.5 * (to_img(c + b) - to_img(c - b));
  return e;
}

// Anti-aliased coverage of pixel center p: signed distance to the boundary,
// linearised through the gradient of the normalized radius.
double coverage(const Ellipse& e, const Mat2& inv, const Vec2& p) {
  const Vec2 q = inv * (p - e.center);
  const double d = q.norm();
  if (d < 1e-12) return 1.0;
  const double grad = (inv.transpose() * (q / d)).norm();
  return std::clamp(0.5 + (1.0 - d) / grad, 0.0, 1.0);
}

// Blends `value` into img under the ellipse, optionally restricted by a clip ellipse.
void paint(Image& img, const Ellipse& e, double value, const Ellipse* clip = nullptr) {
  if (std::abs(e.axes.determinant()) < 1e-9) return;
  const Mat2 inv = e.axes.inverse();
  Mat2 clip_inv;
  if (clip) {
    if (std::abs(clip->axes.determinant()) < 1e-9) return;
    clip_inv = clip->axes.inverse();
  }
  const double reach = e.axes.col(0).norm() + e.axes.col(1).norm() + 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(e.center.x() - reach)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(e.center.x() + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(e.center.y() - reach)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(e.center.y() + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p(x, y);
      double alpha = coverage(e, inv, p);
      if (clip && alpha > 0.0) alpha *= coverage(*clip, clip_inv, p);
      if (alpha <= 0.0) continue;
      double& px = img.at(x, y);
      px = px * (1.0 - alpha) + value * alpha;
    }
  }
}

}  // namespace

PersonGeometry PersonGeometry::for_person(int person_id) {
  std::mt19937_64 rng(splitmix64(static_cast<std::uint64_t>(person_id) ^ 0x5eedface5eedfaceULL));
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  PersonGeometry g;
  g.eye_offset = u(29.0, 33.0);
  g.eye_y = u(-10.0, -6.0);
  g.eye_width = u(26.0, 30.0);
  g.mouth_half_width = u(22.0, 27.0);
  g.mouth_y = u(52.0, 62.0);
  g.face_z = u(-88.0, -82.0);
  g.head_rx = u(72.0, 82.0);
  g.head_ry = u(95.0, 105.0);
  g.skin = u(0.55, 0.7);
  g.brow_lift = 10.0;
  return g;
}

std::array<Vec3, 6> PersonGeometry::landmarks_head() const {
  const double h = 0.5 * eye_width;
  return {Vec3(-eye_offset - h, eye_y, face_z), Vec3(-eye_offset + h, eye_y, face_z),
          Vec3(eye_offset - h, eye_y, face_z),  Vec3(eye_offset + h, eye_y, face_z),
          Vec3(-mouth_half_width, mouth_y, face_z), Vec3(mouth_half_width, mouth_y, face_z)};
}

std::array<Vec3, 6> posed_landmarks(const PersonGeometry& person, const HeadPose& head) {
  auto pts = person.landmarks_head();
  for (auto& p : pts) p = head.rotation * p + head.translation;
  return pts;
}

Image render_face(const PersonGeometry& person, const CameraModel& camera,
                  const RenderParams& params, std::mt19937_64& rng) {
  const PersonGeometry& g = person;
  const HeadPose& head = params.head;
  Image img(camera.width, camera.height, 1, 0.25);
  const Vec3 ex(1.0, 0.0, 0.0);
  const Vec3 ey(0.0, 1.0, 0.0);

  paint(img, project_ellipse(camera, head, Vec3::Zero(), g.head_rx * ex, g.head_ry * ey), g.skin);
  paint(img, project_ellipse(camera, head, Vec3(0.0, 22.0, g.face_z - 12.0), 6.0 * ex, 11.0 * ey),
        g.skin * 0.75);
  paint(img, project_ellipse(camera, head, Vec3(0.0, g.mouth_y, g.face_z),
                             g.mouth_half_width * ex, 3.5 * ey),
        0.3);

  const Vec3 gaze_head = angles_to_vector(params.relative_gaze);
  const Vec3 iris_shift(kIrisGain * gaze_head.x(), kIrisGain * gaze_head.y(), 0.0);
  const double block_half_height = 0.45 * g.eye_width;
  const double brow_half = 2.0;
  const Vec3 brow_shift(0.5 * kBrowGain * gaze_head.x() + params.brow_jitter.x(),
                        -kBrowGain * params.relative_gaze.pitch + params.brow_jitter.y(), 0.0);

  for (double side : {-1.0, 1.0}) {
    const Vec3 eye(side * g.eye_offset, g.eye_y, g.face_z);
    const Vec3 brow = eye + Vec3(0.0, -(block_half_height + g.brow_lift + brow_half), 0.0) + brow_shift;
    paint(img, project_ellipse(camera, head, brow, 0.5 * g.eye_width * ex, brow_half * ey), 0.22);
    const Ellipse sclera =
        project_ellipse(camera, head, eye, 0.5 * g.eye_width * ex, 0.21 * g.eye_width * ey);
    paint(img, sclera, 0.92);
    paint(img, project_ellipse(camera, head, eye + iris_shift, 5.0 * ex, 5.0 * ey), 0.12, &sclera);
  }

  const Vec3 ref = reference_point(posed_landmarks(person, head));
  const Vec2 ref_px = project(camera, ref);
  const double half_width_px = camera.projection(0, 0) * g.head_rx / ref.z();
  const double shade = 0.35 * params.illumination;
  std::normal_distribution<double> noise(0.0, params.noise_std > 0.0 ? params.noise_std : 1.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double u = std::clamp((x - ref_px.x()) / half_width_px, -1.0, 1.0);
      double v = img.at(x, y) * (1.0 + shade * u);
      if (params.noise_std > 0.0) v += noise(rng);
      img.at(x, y) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

ScreenPlane default_screen() {
  ScreenPlane s;
  s.pixel_pitch = Vec2(0.28, 0.28);
  s.resolution = {1920, 1080};
  s.translation = Vec3(-0.5 * 1920 * 0.28, 10.0, 0.0);
  return s;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("synth." + field + ": " + why);
  };
  const double limit = kPi / 3.0;
  auto range = [&](const std::string& field, double v) {
    if (!(v >= 0.0 && v <= limit)) fail(field, "must lie in [0, pi/3]");
  };
  if (persons < 1) fail("persons", "must be at least 1");
  if (samples_per_person < 1) fail("samples_per_person", "must be at least 1");
  if (image_size < 16) fail("image_size", "must be at least 16");
  if (!(focal > 0.0)) fail("focal", "must be positive");
  range("gaze_yaw_range", gaze_range.yaw);
  range("gaze_pitch_range", gaze_range.pitch);
  range("head_yaw_range", head_range.yaw);
  range("head_pitch_range", head_range.pitch);
  range("roll_range", roll_range);
  range("illumination_range", illumination_range);
  if (!(noise_std >= 0.0)) fail("noise_std", "must be non-negative");
  if (!(eye_head_coupling >= 0.0 && eye_head_coupling <= 1.0)) {
    fail("eye_head_coupling", "must lie in [0, 1]");
  }
  if (!(distance_min > 200.0)) fail("distance_min", "must exceed 200 mm");
  if (!(distance_max >= distance_min)) fail("distance_max", "must be >= distance_min");
  if (!(lateral_offset >= 0.0)) fail("lateral_offset", "must be non-negative");
  if (!(brow_jitter_std >= 0.0)) fail("brow_jitter_std", "must be non-negative");
}

SynthItem synth_sample(const SynthConfig& cfg, int person_id, int index) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64((static_cast<std::uint64_t>(person_id) << 32) ^
                                                       static_cast<std::uint64_t>(index))));
  auto u = [&](double half) {
    return half > 0.0 ? std::uniform_real_distribution<double>(-half, half)(rng) : 0.0;
  };
  const PersonGeometry person = PersonGeometry::for_person(person_id);

  RenderParams params;
  const double head_yaw = u(cfg.head_range.yaw);
  const double head_pitch = u(cfg.head_range.pitch);
  const double roll = u(cfg.roll_range);
  params.relative_gaze.yaw = u(cfg.gaze_range.yaw) - cfg.eye_head_coupling * head_yaw;
  params.relative_gaze.pitch = u(cfg.gaze_range.pitch) - cfg.eye_head_coupling * head_pitch;
  params.illumination = u(cfg.illumination_range);
  params.noise_std = cfg.noise_std;
  const double distance =
      std::uniform_real_distribution<double>(cfg.distance_min, cfg.distance_max)(rng);
  const Vec3 ref_target(u(cfg.lateral_offset), u(0.75 * cfg.lateral_offset), distance);
  if (cfg.brow_jitter_std > 0.0) {
    std::normal_distribution<double> jitter(0.0, cfg.brow_jitter_std);
    params.brow_jitter = Vec2(jitter(rng), jitter(rng));
  }

  params.head.rotation = rotation_from_euler(head_yaw, head_pitch, roll);
  const auto lm_head = person.landmarks_head();
  params.head.translation = ref_target - params.head.rotation * reference_point(lm_head);

  const double c = 0.5 * (cfg.image_size - 1);
  const CameraModel camera =
      CameraModel::from_intrinsics(cfg.focal, cfg.focal, c, c, cfg.image_size, cfg.image_size);

  SynthItem item;
  item.illumination = params.illumination;
  item.image = render_face(person, camera, params, rng);

  Sample& s = item.sample;
  s.person_id = person_id;
  s.image_field = "person_" + std::to_string(person_id) + "/" + std::to_string(index) + ".png";
  s.image = s.image_field;
  s.camera = camera;
  s.head = params.head;
  s.landmarks3d = posed_landmarks(person, params.head);
  for (int i = 0; i < 6; ++i) s.landmarks.points[i] = project(camera, s.landmarks3d[i]);

  const Vec3 ref = s.reference();
  const Vec3 gaze = params.head.rotation * angles_to_vector(params.relative_gaze);
  s.screen = default_screen();
  s.gaze_target = ref + (-ref.z() / gaze.z()) * gaze;
  s.on_screen_px = intersect_screen(ref, gaze, *s.screen, ScreenUnits::px);
  return item;
}

std::vector<Sample> synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.persons) * cfg.samples_per_person);
  for (int p = 1; p <= cfg.persons; ++p) {
    std::filesystem::create_directories(out_dir / ("person_" + std::to_string(p)));
    for (int i = 0; i < cfg.samples_per_person; ++i) {
      SynthItem item = synth_sample(cfg, p, i);
      item.sample.image = out_dir / item.sample.image_field;
      write_png(item.sample.image, item.image);
      samples.push_back(std::move(item.sample));
    }
  }
  write_manifest(out_dir / "manifest.csv", samples);
  return samples;
}

}  // namespace fullface
