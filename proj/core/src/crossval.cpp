#include "fullface/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <thread>

#include "fullface/error.hpp"
#include "fullface/image_io.hpp"

namespace fullface {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Eye crop placed in the vertical middle of a square gray canvas.
Image eye_canvas(const Image& img, const Landmarks2D& lm, int size, Mat3& homography) {
  using L = Landmarks2D;
  const int eye_h = std::max(1, static_cast<int>(std::lround(size * 36.0 / 60.0)));
  const Rect rect = eye_crop_rect(lm.points[L::inner_left], lm.points[L::outer_left], 1.5, size, eye_h);
  const Mat3 crop = crop_homography(rect, size, eye_h);
  const Image eye = warp_perspective(img, crop, size, eye_h);
  const int top = (size - eye_h) / 2;
  Mat3 shift = Mat3::Identity();
  shift(1, 2) = top;
  homography = shift * crop;
  Image canvas(size, size, img.channels(), 0.5);
  for (int y = 0; y < eye_h; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < img.channels(); ++c) canvas.at(x, y + top, c) = eye.at(x, y, c);
    }
  }
  return canvas;
}

struct VariantOutput {
  Image image;
  Landmarks2D landmarks;
};

VariantOutput make_variant(const Sample& s, const Image& raw, Task task, InputVariant variant,
                           const NormalizationSpace& space, int input_size,
                           const NormalizationTransform* transform) {
  Image base;
  Landmarks2D lm;
  if (task == Task::gaze3d) {
    const NormalizationTransform t =
        transform ? *transform : build_normalization(s.head, s.reference(), space, s.camera);
    base = warp_perspective(raw, t.image_homography, space.output_width(), space.output_height());
    lm = s.landmarks.transformed(t.image_homography);
    if (base.width() != input_size || base.height() != input_size) {
      throw ValidationError("normalized image size does not match the model input size");
    }
  } else {
    const Mat3 h = crop_homography(face_crop_rect(s.landmarks), input_size, input_size);
    base = warp_perspective(raw, h, input_size, input_size);
    lm = s.landmarks.transformed(h);
  }
  switch (variant) {
    case InputVariant::face:
      return {std::move(base), lm};
    case InputVariant::eyes_blocked:
      return {block_eyes(base, lm), lm};
    case InputVariant::single_eye: {
      Mat3 h;
      Image eye = eye_canvas(base, lm, input_size, h);
      return {std::move(eye), lm.transformed(h)};
    }
  }
  throw ValidationError("unknown input variant");
}

double mean_of(const std::vector<double>& v) { return mean_std(v).mean; }

}  // namespace

Task parse_task(const std::string& text) {
  if (text == "3d") return Task::gaze3d;
  if (text == "2d") return Task::screen2d;
  throw ValidationError("task must be 2d or 3d, got '" + text + "'");
}

InputVariant parse_variant(const std::string& text) {
  if (text == "face") return InputVariant::face;
  if (text == "eyes_blocked") return InputVariant::eyes_blocked;
  if (text == "single_eye") return InputVariant::single_eye;
  throw ValidationError("variant must be face, eyes_blocked or single_eye, got '" + text + "'");
}

std::string to_string(Task task) { return task == Task::gaze3d ? "3d" : "2d"; }

std::string to_string(InputVariant variant) {
  switch (variant) {
    case InputVariant::face: return "face";
    case InputVariant::eyes_blocked: return "eyes_blocked";
    case InputVariant::single_eye: return "single_eye";
  }
  return "?";
}

NormalizationSpace default_space(int size) {
  return NormalizationSpace::square(600.0, 0.4 * size * 600.0 / 62.0, size);
}

Image variant_image(const Sample& s, const Image& raw, Task task, InputVariant variant,
                    const NormalizationSpace& space, int input_size) {
  return make_variant(s, raw, task, variant, space, input_size, nullptr).image;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  std::vector<std::exception_ptr> failures(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        failures[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !stop; i = next++) {
          try {
            fn(i);
          } catch (...) {
            failures[i] = std::current_exception();
            stop = true;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

std::vector<PreparedSample> prepare_samples(const std::vector<Sample>& samples,
                                            const PrepareOptions& options) {
  if (samples.empty()) throw ValidationError("no samples to prepare");
  options.space.validate();
  std::vector<PreparedSample> out(samples.size());
  parallel_for(samples.size(), options.jobs, [&](std::size_t i) {
    const Sample& s = samples[i];
    PreparedSample& p = out[i];
    p.index = i;
    p.person_id = s.person_id;
    p.reference = s.reference();
    p.gaze = s.gaze_vector();
    p.head = s.head;
    p.screen = s.screen;
    p.transform = build_normalization(s.head, p.reference, options.space, s.camera);
    p.gaze_normalized = vector_to_angles(normalize_gaze(p.transform, p.gaze, GazeDirection::forward));
    p.head_normalized =
        vector_to_angles(normalize_gaze(p.transform, headpose_as_gaze(s.head), GazeDirection::forward));
    if (s.screen) p.screen_mm = s.on_screen_mm();

    Image raw;
    try {
      raw = read_png(s.image);
    } catch (const IoError& e) {
      throw ValidationError("sample " + std::to_string(i + 1) + ": " + e.what());
    }
    VariantOutput v = make_variant(s, raw, options.task, options.variant, options.space,
                                   options.input_size, &p.transform);
    p.image = std::move(v.image);
    p.landmarks = v.landmarks;
    p.input = image_to_tensor(p.image, options.input_channels);
    if (options.task == Task::gaze3d) {
      p.target = {p.gaze_normalized.yaw, p.gaze_normalized.pitch};
    } else {
      if (!p.screen_mm) {
        throw ValidationError("sample " + std::to_string(i + 1) + ": 2d task needs a screen");
      }
      p.target = {p.screen_mm->x(), p.screen_mm->y()};
    }
  });
  return out;
}

Vec3 prediction_to_gaze(const PreparedSample& s, Task task, const std::array<double, 2>& pred) {
  if (task == Task::gaze3d) {
    const double limit = 0.5 * kPi - 1e-6;
    const GazeAngles a{pred[0], std::clamp(pred[1], -limit, limit)};
    return normalize_gaze(s.transform, angles_to_vector(a), GazeDirection::inverse);
  }
  if (!s.screen) throw ValidationError("2d prediction needs a screen");
  return screen_point_to_gaze(s.reference, Vec2(pred[0], pred[1]), *s.screen);
}

namespace {

SampleError score(const PreparedSample& s, Task task, const std::array<double, 2>& pred) {
  SampleError e{s.index, s.person_id, 0.0, kNaN};
  const Vec3 g = prediction_to_gaze(s, task, pred);
  e.angular_deg = angular_error(g, s.gaze);
  if (task == Task::screen2d) {
    e.euclid_mm = euclidean_error_2d(Vec2(pred[0], pred[1]), *s.screen_mm);
  } else if (s.screen) {
    try {
      e.euclid_mm = gaze_error_on_screen(s.reference, g, s.gaze, *s.screen);
    } catch (const GeometryError&) {
      e.euclid_mm = kNaN;
    }
  }
  return e;
}

}  // namespace

Baselines evaluate_baselines(const std::vector<const PreparedSample*>& train,
                             const std::vector<const PreparedSample*>& test, Task task) {
  if (train.empty() || test.empty()) throw ValidationError("baselines need non-empty train and test sets");
  std::vector<GazeAngles> head, gaze;
  std::array<std::vector<double>, 2> targets;
  for (const PreparedSample* s : train) {
    head.push_back(s->head_normalized);
    gaze.push_back(s->gaze_normalized);
    targets[0].push_back(s->target[0]);
    targets[1].push_back(s->target[1]);
  }
  const AngleRegression reg = fit_headpose_regression(head, gaze);
  const std::array<double, 2> mean_target{mean_of(targets[0]), mean_of(targets[1])};

  std::vector<double> naive, regression, mean_deg, mean_mm;
  for (const PreparedSample* s : test) {
    naive.push_back(angular_error(headpose_as_gaze(s->head), s->gaze));
    const GazeAngles r = reg.apply(s->head_normalized);
    regression.push_back(score(*s, Task::gaze3d, {r.yaw, r.pitch}).angular_deg);
    const SampleError m = score(*s, task, mean_target);
    mean_deg.push_back(m.angular_deg);
    mean_mm.push_back(m.euclid_mm);
  }
  return {mean_of(naive), mean_of(regression), mean_of(mean_deg), mean_of(mean_mm)};
}

CrossValResult run_crossvalidation(const std::vector<PreparedSample>& samples,
                                   const std::vector<Fold>& folds, const CrossValOptions& options) {
  options.model.validate();
  if (folds.empty()) throw ValidationError("no folds to evaluate");
  CrossValResult result;
  result.folds.resize(folds.size());

  parallel_for(folds.size(), options.jobs, [&](std::size_t f) {
    const Fold& fold = folds[f];
    const std::set<int> test_ids(fold.test_persons.begin(), fold.test_persons.end());
    const std::set<int> train_ids(fold.train_persons.begin(), fold.train_persons.end());
    for (int p : test_ids) {
      if (train_ids.count(p)) {
        throw ValidationError("fold " + std::to_string(f) + ": person " + std::to_string(p) +
                              " is in both train and test");
      }
    }
    std::vector<const PreparedSample*> train_set, test_set;
    std::vector<TrainingExample> examples;
    for (const auto& s : samples) {
      if (test_ids.count(s.person_id)) {
        test_set.push_back(&s);
      } else if (train_ids.count(s.person_id)) {
        train_set.push_back(&s);
        examples.push_back({s.input, s.target});
      }
    }
    if (train_set.empty() || test_set.empty()) {
      throw ValidationError("fold " + std::to_string(f) + " has an empty train or test set");
    }

    ModelConfig config = options.model;
    config.seed = options.model.seed + f;
    TrainedModel model;
    try {
      model = train(config, examples);
    } catch (const DivergenceError& e) {
      throw DivergenceError("fold " + std::to_string(f) + ": " + e.what());
    }

    FoldResult& r = result.folds[f];
    r.fold = static_cast<int>(f);
    r.test_persons = fold.test_persons;
    r.log = model.log;
    std::vector<double> ang, mm;
    for (const PreparedSample* s : test_set) {
      r.errors.push_back(score(*s, options.task, model.predict(s->input)));
      ang.push_back(r.errors.back().angular_deg);
      mm.push_back(r.errors.back().euclid_mm);
    }
    r.angular = mean_std(ang);
    r.euclid = mean_std(mm);
    r.baselines = evaluate_baselines(train_set, test_set, options.task);
  });

  std::vector<double> ang, mm, naive, reg, mdeg, mmm;
  for (const auto& r : result.folds) {
    ang.push_back(r.angular.mean);
    mm.push_back(r.euclid.mean);
    naive.push_back(r.baselines.headpose_naive_deg);
    reg.push_back(r.baselines.headpose_regression_deg);
    mdeg.push_back(r.baselines.mean_predictor_deg);
    mmm.push_back(r.baselines.mean_predictor_mm);
  }
  result.summary.angular = mean_std(ang);
  result.summary.euclid = mean_std(mm);
  result.summary.baselines = {mean_of(naive), mean_of(reg), mean_of(mdeg), mean_of(mmm)};
  return result;
}

void write_fold_csv(const std::filesystem::path& path, const FoldResult& fold) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample,person_id,angular_deg,euclid_mm\n";
  for (const auto& e : fold.errors) {
    out << e.index << ',' << e.person_id << ',' << fmt(e.angular_deg) << ',' << fmt(e.euclid_mm)
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_summary_csv(const std::filesystem::path& path, const CrossValResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "fold,test_persons,samples,angular_mean_deg,angular_std_deg,euclid_mean_mm,euclid_std_mm,"
         "headpose_naive_deg,headpose_regression_deg,mean_predictor_deg,mean_predictor_mm\n";
  auto row = [&](const std::string& id, const std::string& persons, std::size_t n, const MeanStd& a,
                 const MeanStd& e, const Baselines& b) {
    out << id << ',' << persons << ',' << n << ',' << fmt(a.mean) << ',' << fmt(a.std) << ','
        << fmt(e.mean) << ',' << fmt(e.std) << ',' << fmt(b.headpose_naive_deg) << ','
        << fmt(b.headpose_regression_deg) << ',' << fmt(b.mean_predictor_deg) << ','
        << fmt(b.mean_predictor_mm) << '\n';
  };
  std::size_t total = 0;
  for (const auto& f : result.folds) {
    std::string persons;
    for (std::size_t i = 0; i < f.test_persons.size(); ++i) {
      persons += (i ? ";" : "") + std::to_string(f.test_persons[i]);
    }
    row(std::to_string(f.fold), persons, f.errors.size(), f.angular, f.euclid, f.baselines);
    total += f.errors.size();
  }
  row("mean", "", total, result.summary.angular, result.summary.euclid, result.summary.baselines);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fullface
