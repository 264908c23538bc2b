#include "atse/field_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "atse/atomic_file.hpp"
#include "atse/errors.hpp"
#include "binary_io.hpp"

namespace atse {

namespace {

using detail::put;

void write_header(std::ostream& out, const GridSpec& spec) {
  out.write("SFLD", 4);
  put<std::uint8_t>(out, kFieldFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.nx));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.nt));
  put<double>(out, spec.dx);
  put<double>(out, spec.dt);
  put<double>(out, spec.v_max);
  put<double>(out, spec.v_cong);
}

GridSpec read_header(detail::BinaryReader& in) {
  in.expect_magic("SFLD");
  const auto version_offset = in.offset();
  const auto version = in.get<std::uint8_t>("version");
  if (version != kFieldFormatVersion) {
    throw FormatError("unsupported field format version " + std::to_string(version), version_offset);
  }
  GridSpec spec;
  spec.nx = in.get<std::uint32_t>("nx");
  spec.nt = in.get<std::uint32_t>("nt");
  spec.dx = in.get<double>("dx");
  spec.dt = in.get<double>("dt");
  spec.v_max = in.get<double>("v_max");
  spec.v_cong = in.get<double>("v_cong");
  try {
    spec.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("invalid grid header: ") + e.what(), in.offset());
  }
  return spec;
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

void write_speed_field(std::ostream& out, const SpeedField& field) {
  write_header(out, field.spec());
  for (double v : field.values()) put<float>(out, static_cast<float>(v));
}

SpeedField read_speed_field(std::istream& stream) {
  detail::BinaryReader in(stream);
  const GridSpec spec = read_header(in);
  std::vector<double> values(spec.cells());
  for (auto& v : values) {
    const auto at = in.offset();
    const double raw = in.get<float>("speed");
    if (!(raw >= 0.0 && raw <= spec.v_max * (1.0 + 1e-6))) throw FormatError("speed outside [0, v_max]", at);
    // f32 rounding may push a value just past a non-representable v_max.
    v = std::min(raw, spec.v_max);
  }
  in.expect_end();
  return SpeedField(spec, std::move(values));
}

void write_partial_field(std::ostream& out, const PartialField& field) {
  write_header(out, field.spec());
  for (double c : field.rgb()) put<float>(out, static_cast<float>(c));
  for (std::uint8_t m : field.observed()) put<std::uint8_t>(out, m);
}

PartialField read_partial_field(std::istream& stream) {
  detail::BinaryReader in(stream);
  const GridSpec spec = read_header(in);
  std::vector<double> rgb(spec.cells() * 3);
  // Colormap values are byte/255 by construction; snapping undoes the f32 rounding.
  for (auto& c : rgb) c = std::round(static_cast<double>(in.get<float>("rgb")) * 255.0) / 255.0;
  std::vector<std::uint8_t> observed(spec.cells());
  for (auto& m : observed) {
    const auto at = in.offset();
    m = in.get<std::uint8_t>("mask");
    if (m > 1) throw FormatError("mask byte must be 0 or 1", at);
  }
  in.expect_end();
  try {
    return PartialField(spec, std::move(rgb), std::move(observed));
  } catch (const DomainError& e) {
    throw FormatError(std::string("invalid partial field payload: ") + e.what(), in.offset());
  }
}

void save_speed_field(const SpeedField& field, const std::filesystem::path& path) {
  write_file_atomically(path, true, [&](std::ostream& out) { write_speed_field(out, field); });
}

SpeedField load_speed_field(const std::filesystem::path& path) {
  auto in = open_binary(path);
  return read_speed_field(in);
}

void save_partial_field(const PartialField& field, const std::filesystem::path& path) {
  write_file_atomically(path, true, [&](std::ostream& out) { write_partial_field(out, field); });
}

PartialField load_partial_field(const std::filesystem::path& path) {
  auto in = open_binary(path);
  return read_partial_field(in);
}

}  // namespace atse
