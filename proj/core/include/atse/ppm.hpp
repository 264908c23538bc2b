#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "atse/grid.hpp"

namespace atse {

/// Raw RGB image, rows top to bottom.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb8> pixels;
};

/// Binary PPM (P6, maxval 255).
void write_ppm(std::ostream& out, const RgbImage& image);
/// Reads P6 files with maxval 255. Throws FormatError.
RgbImage read_ppm(std::istream& in);

/// Field as an image: width nt, height nx, space increasing downward,
/// missing cells black.
RgbImage field_image(const SpeedField& field);
RgbImage field_image(const PartialField& field);

void save_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage load_ppm(const std::filesystem::path& path);

}  // namespace atse
