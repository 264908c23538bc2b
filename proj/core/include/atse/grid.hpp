#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace atse {

inline constexpr double kMpsToKmph = 3.6;

/// Space-time discretization of a road section. Space cells run downstream,
/// time cells run forward; both index from zero at the grid origin.
struct GridSpec {
  double dx = 10.0;  // m
  double dt = 1.0;   // s
  std::size_t nx = 1;
  std::size_t nt = 1;
  double v_max = 30.0;   // m/s
  double v_cong = -5.0;  // m/s, backward wave speed

  /// Throws DomainError when an invariant is violated.
  void validate() const;

  std::size_t cells() const noexcept { return nx * nt; }
  double road_span() const noexcept { return static_cast<double>(nx) * dx; }
  double time_span() const noexcept { return static_cast<double>(nt) * dt; }

  /// Same constants, different dimensions.
  GridSpec resized(std::size_t new_nx, std::size_t new_nt) const;

  bool operator==(const GridSpec&) const = default;
};

/// Complete speed field, nx × nt, space as the outer index.
class SpeedField {
 public:
  /// Every value must lie in [0, v_max]; throws DomainError otherwise.
  SpeedField(GridSpec spec, std::vector<double> values);

  /// Uniform field.
  static SpeedField filled(const GridSpec& spec, double v);

  const GridSpec& spec() const noexcept { return spec_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(std::size_t ix, std::size_t it) const { return values_[ix * spec_.nt + it]; }

  bool operator==(const SpeedField&) const = default;

 private:
  GridSpec spec_;
  std::vector<double> values_;
};

/// One byte-valued RGB pixel.
struct Rgb8 {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb8&) const = default;
};

/// Partially observed field: normalized RGB per cell plus the observation
/// mask. Unobserved cells are black.
class PartialField {
 public:
  /// rgb has nx·nt·3 entries in [0,1]; observed has nx·nt entries.
  /// Throws ShapeError on size mismatch and DomainError when an unobserved
  /// cell is not black or a value is outside [0,1].
  PartialField(GridSpec spec, std::vector<double> rgb, std::vector<std::uint8_t> observed);

  /// All cells missing.
  static PartialField empty(const GridSpec& spec);

  const GridSpec& spec() const noexcept { return spec_; }
  std::span<const double> rgb() const noexcept { return rgb_; }
  std::span<const std::uint8_t> observed() const noexcept { return observed_; }

  bool is_observed(std::size_t ix, std::size_t it) const { return observed_[ix * spec_.nt + it] != 0; }
  double channel(std::size_t ix, std::size_t it, std::size_t c) const {
    return rgb_[(ix * spec_.nt + it) * 3 + c];
  }
  std::size_t observed_count() const noexcept;

  bool operator==(const PartialField&) const = default;

 private:
  GridSpec spec_;
  std::vector<double> rgb_;
  std::vector<std::uint8_t> observed_;
};

/// Red → yellow → green ramp over normalized speed u ∈ [0,1]; blue is always 0.
/// Throws DomainError outside [0,1].
Rgb8 colormap_encode(double u);

/// Inverse of colormap_encode. Black decodes to std::nullopt (missing).
/// Accepts up to one byte of deviation per channel from the curve; throws
/// DecodeError otherwise.
std::optional<double> colormap_decode(Rgb8 rgb);

/// Byte triple of a normalized RGB cell value (round to nearest).
Rgb8 to_bytes(double r, double g, double b);

/// Builds the partial field from optional per-cell speeds (nx·nt, space outer).
/// Throws DomainError for speeds outside [0, v_max], ShapeError on size mismatch.
PartialField encode_partial(std::span<const std::optional<double>> speeds, const GridSpec& spec);

/// Decoded speed per cell, std::nullopt where missing. DecodeError names the
/// offending cell.
std::vector<std::optional<double>> decode_partial(const PartialField& field);

/// Sub-block [x0, x0+wx) × [t0, t0+wt). Throws RangeError when out of bounds.
SpeedField window(const SpeedField& field, std::size_t x0, std::size_t t0, std::size_t wx, std::size_t wt);
PartialField window(const PartialField& field, std::size_t x0, std::size_t t0, std::size_t wx,
                    std::size_t wt);

/// Colormap bytes per cell, space outer. Missing partial cells are black.
std::vector<Rgb8> colorize(const SpeedField& field);
std::vector<Rgb8> colorize(const PartialField& field);

}  // namespace atse
