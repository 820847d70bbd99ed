#include "fullface/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fullface/error.hpp"

namespace fullface {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) {
  throw IoError(std::string("png: ") + msg);
}
void png_warning_fn(png_structp, png_const_charp) {}

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw IoError("not a PNG file: " + path.string());
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

std::array<int, 2> read_png_size(const std::filesystem::path& path) {
  PngReader r(path);
  return {static_cast<int>(png_get_image_width(r.png(), r.info())),
          static_cast<int>(png_get_image_height(r.png(), r.info()))};
}

Image read_png(const std::filesystem::path& path) {
  PngReader r(path);
  png_structp png = r.png();
  png_infop info = r.info();
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) throw IoError("unsupported PNG layout: " + path.string());
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  Image img(width, height, channels);
  auto px = img.pixels();
  for (int y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
      px[y * static_cast<std::size_t>(width) * channels + i] = rows[y][i] / 255.0;
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  FilePtr file = open_file(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8,
               img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
  std::vector<png_byte> row(stride);
  const auto px = img.pixels();
  for (int y = 0; y < img.height(); ++y) {
    for (std::size_t i = 0; i < stride; ++i) {
      const double v = std::clamp(px[y * stride + i], 0.0, 1.0);
      row[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

void write_pgm(const std::filesystem::path& path, const Map2D& map, double scale) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  std::vector<char> bytes(map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double v = scale > 0.0 ? std::clamp(map.values[i] / scale, 0.0, 1.0) : 0.0;
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Map2D read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw IoError("unsupported PGM: " + path.string());
  }
  Map2D map(w, h);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PGM: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) map.values[i] = bytes[i] / 255.0;
  return map;
}

}  // namespace fullface
