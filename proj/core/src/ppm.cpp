#include "atse/ppm.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "atse/atomic_file.hpp"
#include "atse/errors.hpp"

namespace atse {

namespace {

// Next whitespace-delimited header token, skipping `#` comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t header_number(std::istream& in, const char* what) {
  const std::string tok = header_token(in);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(std::string("bad PPM ") + what, static_cast<std::uint64_t>(std::max<std::streamoff>(0, in.tellg())));
  }
  return std::stoul(tok);
}

}  // namespace

void write_ppm(std::ostream& out, const RgbImage& image) {
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (const auto& px : image.pixels) {
    const char bytes[3] = {static_cast<char>(px.r), static_cast<char>(px.g), static_cast<char>(px.b)};
    out.write(bytes, 3);
  }
}

RgbImage read_ppm(std::istream& in) {
  if (header_token(in) != "P6") throw FormatError("not a binary PPM (P6)", 0);
  RgbImage image;
  image.width = header_number(in, "width");
  image.height = header_number(in, "height");
  if (header_number(in, "maxval") != 255) throw FormatError("only maxval 255 is supported", 0);
  image.pixels.resize(image.width * image.height);
  for (std::size_t k = 0; k < image.pixels.size(); ++k) {
    char bytes[3];
    in.read(bytes, 3);
    if (in.gcount() != 3) throw FormatError("truncated pixel data", static_cast<std::uint64_t>(k * 3));
    image.pixels[k] = {static_cast<std::uint8_t>(bytes[0]), static_cast<std::uint8_t>(bytes[1]),
                       static_cast<std::uint8_t>(bytes[2])};
  }
  return image;
}

RgbImage field_image(const SpeedField& field) {
  return {field.spec().nt, field.spec().nx, colorize(field)};
}

RgbImage field_image(const PartialField& field) {
  return {field.spec().nt, field.spec().nx, colorize(field)};
}

void save_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file_atomically(path, true, [&](std::ostream& out) { write_ppm(out, image); });
}

RgbImage load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_ppm(in);
}

}  // namespace atse
