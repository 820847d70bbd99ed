#include "fullface/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fullface/error.hpp"
#include "fullface/image_io.hpp"

namespace fullface {

namespace {

const Mat3 kMirror = Vec3(-1.0, 1.0, 1.0).asDiagonal();
constexpr std::array<int, 6> kMirrorOrder{3, 2, 1, 0, 5, 4};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& column) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ValidationError("column '" + column + "': not a finite number: '" + t + "'");
  }
  return v;
}

std::vector<std::string> base_columns() {
  std::vector<std::string> cols{"person_id", "image", "fx", "fy", "cx", "cy"};
  for (int i = 0; i < 6; ++i) {
    cols.push_back("lm" + std::to_string(i) + "_x");
    cols.push_back("lm" + std::to_string(i) + "_y");
  }
  for (int i = 0; i < 6; ++i) {
    for (const char* a : {"_x", "_y", "_z"}) cols.push_back("lm3d" + std::to_string(i) + a);
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cols.push_back("r" + std::to_string(r) + std::to_string(c));
  }
  for (const char* a : {"tx", "ty", "tz", "gaze_x", "gaze_y", "gaze_z"}) cols.emplace_back(a);
  return cols;
}

std::vector<std::string> screen_columns() {
  std::vector<std::string> cols;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cols.push_back("screen_r" + std::to_string(r) + std::to_string(c));
  }
  for (const char* a : {"screen_tx", "screen_ty", "screen_tz", "pitch_x", "pitch_y", "res_w",
                        "res_h", "screen_px_x", "screen_px_y"}) {
    cols.emplace_back(a);
  }
  return cols;
}

}  // namespace

Vec3 Sample::gaze_vector() const {
  const Vec3 d = gaze_target - reference();
  const double n = d.norm();
  if (!(n > 0.0)) throw GeometryError("gaze target coincides with the reference point");
  return d / n;
}

Vec2 Sample::on_screen_mm() const {
  if (!screen) throw ValidationError("sample has no screen");
  if (on_screen_px) return on_screen_px->cwiseProduct(screen->pixel_pitch);
  return intersect_screen(reference(), gaze_vector(), *screen, ScreenUnits::mm);
}

void Sample::validate() const {
  camera.validate();
  head.validate();
  landmarks.validate();
  for (const auto& p : landmarks3d) {
    if (!p.allFinite()) throw ValidationError("3D landmarks must be finite");
  }
  if (!gaze_target.allFinite()) throw ValidationError("gaze target must be finite");
  if (!(reference().norm() > 0.0)) throw ValidationError("reference point at camera origin");
  if (screen) {
    screen->validate();
    if (on_screen_px) {
      Vec2 px;
      try {
        px = intersect_screen(reference(), gaze_vector(), *screen, ScreenUnits::px);
      } catch (const GeometryError& e) {
        throw ValidationError(std::string("on-screen target inconsistent: ") + e.what());
      }
      if ((px - *on_screen_px).norm() > 2.0) {
        throw ValidationError("on-screen target is more than 2 px from the projected gaze target");
      }
    }
  }
}

std::vector<std::string> manifest_columns(bool with_screen) {
  auto cols = base_columns();
  if (with_screen) {
    const auto extra = screen_columns();
    cols.insert(cols.end(), extra.begin(), extra.end());
  }
  return cols;
}

std::vector<Sample> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw ValidationError("manifest has no header: " + path.string());
  if (header_line.size() >= 3 && static_cast<unsigned char>(header_line[0]) == 0xEF) {
    header_line.erase(0, 3);  // UTF-8 BOM
  }
  std::map<std::string, std::size_t> index;
  const auto header = split_csv(header_line);
  for (std::size_t i = 0; i < header.size(); ++i) index[trim(header[i])] = i;
  for (const auto& c : base_columns()) {
    if (!index.count(c)) throw ValidationError("manifest is missing column '" + c + "'");
  }
  const auto screen_cols = screen_columns();
  const auto screen_present = std::count_if(screen_cols.begin(), screen_cols.end(),
                                            [&](const std::string& c) { return index.count(c) > 0; });
  if (screen_present != 0 && screen_present != static_cast<long>(screen_cols.size())) {
    throw ValidationError("manifest has an incomplete screen column block");
  }
  const bool has_screen_block = screen_present != 0;
  const auto base_dir = path.parent_path();

  std::vector<Sample> samples;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    try {
      const auto cells = split_csv(line);
      if (cells.size() < header.size()) {
        throw ValidationError("expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(cells.size()));
      }
      auto num = [&](const std::string& c) { return parse_double(cells[index.at(c)], c); };

      Sample s;
      const double pid = num("person_id");
      if (pid != std::floor(pid) || pid < 0) throw ValidationError("person_id must be a non-negative integer");
      s.person_id = static_cast<int>(pid);
      s.image_field = trim(cells[index.at("image")]);
      s.image = std::filesystem::path(s.image_field).is_absolute() ? std::filesystem::path(s.image_field)
                                                                   : base_dir / s.image_field;
      for (int i = 0; i < 6; ++i) {
        const std::string b = "lm" + std::to_string(i);
        s.landmarks.points[i] = Vec2(num(b + "_x"), num(b + "_y"));
        const std::string b3 = "lm3d" + std::to_string(i);
        s.landmarks3d[i] = Vec3(num(b3 + "_x"), num(b3 + "_y"), num(b3 + "_z"));
      }
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) s.head.rotation(r, c) = num("r" + std::to_string(r) + std::to_string(c));
      }
      s.head.translation = Vec3(num("tx"), num("ty"), num("tz"));
      s.gaze_target = Vec3(num("gaze_x"), num("gaze_y"), num("gaze_z"));

      if (has_screen_block && !trim(cells[index.at("screen_r00")]).empty()) {
        ScreenPlane screen;
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) {
            screen.rotation(r, c) = num("screen_r" + std::to_string(r) + std::to_string(c));
          }
        }
        screen.translation = Vec3(num("screen_tx"), num("screen_ty"), num("screen_tz"));
        screen.pixel_pitch = Vec2(num("pitch_x"), num("pitch_y"));
        screen.resolution = {static_cast<int>(num("res_w")), static_cast<int>(num("res_h"))};
        s.screen = screen;
        if (!trim(cells[index.at("screen_px_x")]).empty()) {
          s.on_screen_px = Vec2(num("screen_px_x"), num("screen_px_y"));
        }
      }

      std::array<int, 2> size;
      try {
        size = read_png_size(s.image);
      } catch (const IoError& e) {
        throw ValidationError(std::string("unreadable image: ") + e.what());
      }
      s.camera = CameraModel::from_intrinsics(num("fx"), num("fy"), num("cx"), num("cy"), size[0],
                                              size[1]);
      s.validate();
      samples.push_back(std::move(s));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
  }
  return samples;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  const bool with_screen = std::any_of(samples.begin(), samples.end(),
                                       [](const Sample& s) { return s.screen.has_value(); });
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto cols = manifest_columns(with_screen);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& s : samples) {
    const Mat3& k = s.camera.projection;
    out << s.person_id << ',' << s.image_field << ',' << fmt(k(0, 0)) << ',' << fmt(k(1, 1)) << ','
        << fmt(k(0, 2)) << ',' << fmt(k(1, 2));
    for (const auto& p : s.landmarks.points) out << ',' << fmt(p.x()) << ',' << fmt(p.y());
    for (const auto& p : s.landmarks3d) out << ',' << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(p.z());
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << ',' << fmt(s.head.rotation(r, c));
    }
    for (int i = 0; i < 3; ++i) out << ',' << fmt(s.head.translation[i]);
    for (int i = 0; i < 3; ++i) out << ',' << fmt(s.gaze_target[i]);
    if (with_screen) {
      if (s.screen) {
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) out << ',' << fmt(s.screen->rotation(r, c));
        }
        for (int i = 0; i < 3; ++i) out << ',' << fmt(s.screen->translation[i]);
        out << ',' << fmt(s.screen->pixel_pitch.x()) << ',' << fmt(s.screen->pixel_pitch.y()) << ','
            << s.screen->resolution[0] << ',' << s.screen->resolution[1];
        if (s.on_screen_px) {
          out << ',' << fmt(s.on_screen_px->x()) << ',' << fmt(s.on_screen_px->y());
        } else {
          out << ",,";
        }
      } else {
        out << std::string(screen_columns().size(), ',');
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

NormalizedSample normalize_sample(const Sample& s, const Image& img,
                                  const NormalizationSpace& space) {
  NormalizedSample n;
  n.transform = build_normalization(s.head, s.reference(), space, s.camera);
  n.image = warp_perspective(img, n.transform.image_homography, space.output_width(),
                             space.output_height());
  n.gaze = vector_to_angles(normalize_gaze(n.transform, s.gaze_vector(), GazeDirection::forward));
  const Vec3 head_forward = s.head.rotation * Vec3(0.0, 0.0, -1.0);
  n.head = vector_to_angles(normalize_gaze(n.transform, head_forward, GazeDirection::forward));
  n.landmarks = s.landmarks.transformed(n.transform.image_homography);
  return n;
}

NormalizedSample normalize_sample(const Sample& s, const NormalizationSpace& space) {
  return normalize_sample(s, read_png(s.image), space);
}

FlippedSample flip_sample(const Sample& s, const Image& img) {
  FlippedSample f{s, img.flipped_horizontally()};
  Sample& m = f.sample;
  const int w = s.camera.width;
  m.landmarks = s.landmarks.mirrored(w);
  for (std::size_t i = 0; i < 6; ++i) m.landmarks3d[i] = kMirror * s.landmarks3d[kMirrorOrder[i]];
  m.head.rotation = kMirror * s.head.rotation * kMirror;
  m.head.translation = kMirror * s.head.translation;
  m.gaze_target = kMirror * s.gaze_target;
  m.camera.projection(0, 2) = (w - 1) - s.camera.projection(0, 2);
  if (s.screen) {
    m.screen->rotation = kMirror * s.screen->rotation * kMirror;
    m.screen->translation = kMirror * s.screen->translation;
    if (s.on_screen_px) m.on_screen_px = Vec2(-s.on_screen_px->x(), s.on_screen_px->y());
  }
  return f;
}

std::vector<int> person_ids(const std::vector<Sample>& samples) {
  std::vector<int> ids;
  for (const auto& s : samples) ids.push_back(s.person_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace fullface
