#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "atse/grid.hpp"

namespace atse {

// Binary field files. Header: magic "SFLD", u8 version (1), u32 nx, u32 nt,
// f64 dx, f64 dt, f64 v_max, f64 v_cong. A full field follows with nx·nt f32
// speeds; a partial field with nx·nt·3 f32 RGB values then nx·nt u8 mask
// bytes. All numbers little-endian, space as the outer index.

inline constexpr std::uint8_t kFieldFormatVersion = 1;

void write_speed_field(std::ostream& out, const SpeedField& field);
SpeedField read_speed_field(std::istream& in);

void write_partial_field(std::ostream& out, const PartialField& field);
PartialField read_partial_field(std::istream& in);

/// File variants write through a temporary and rename on success.
void save_speed_field(const SpeedField& field, const std::filesystem::path& path);
SpeedField load_speed_field(const std::filesystem::path& path);
void save_partial_field(const PartialField& field, const std::filesystem::path& path);
PartialField load_partial_field(const std::filesystem::path& path);

}  // namespace atse
