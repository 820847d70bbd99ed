#pragma once

#include <filesystem>

#include "fullface/imaging.hpp"

namespace fullface {

/// Decodes an 8-bit (or 16-bit) gray/RGB/RGBA PNG into [0, 1] values.
/// Alpha is dropped; gray+alpha becomes gray.
Image read_png(const std::filesystem::path& path);

/// Width and height from the PNG header without decoding pixels.
std::array<int, 2> read_png_size(const std::filesystem::path& path);

/// Writes 8-bit PNG, rounding clamp(v, 0, 1) * 255. Output bytes depend only
/// on pixel values.
void write_png(const std::filesystem::path& path, const Image& img);

/// Binary 8-bit PGM (P5); values are clamp(v / scale, 0, 1) * 255.
void write_pgm(const std::filesystem::path& path, const Map2D& map, double scale);
Map2D read_pgm(const std::filesystem::path& path);

}  // namespace fullface
