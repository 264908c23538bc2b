#include "atse/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "atse/errors.hpp"

namespace atse {

namespace {

std::string cell_name(std::size_t ix, std::size_t it) {
  return "cell (x=" + std::to_string(ix) + ", t=" + std::to_string(it) + ")";
}

void check_window(const GridSpec& spec, std::size_t x0, std::size_t t0, std::size_t wx, std::size_t wt) {
  if (wx == 0 || wt == 0 || x0 + wx > spec.nx || t0 + wt > spec.nt) {
    throw RangeError("window [" + std::to_string(x0) + "+" + std::to_string(wx) + ", " +
                     std::to_string(t0) + "+" + std::to_string(wt) + ") exceeds field " +
                     std::to_string(spec.nx) + "x" + std::to_string(spec.nt));
  }
}

}  // namespace

void GridSpec::validate() const {
  if (!(dx > 0.0) || !std::isfinite(dx)) throw DomainError("grid dx must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("grid dt must be positive");
  if (nx < 1 || nt < 1) throw DomainError("grid needs at least one cell in each dimension");
  if (!(v_max > 0.0) || !std::isfinite(v_max)) throw DomainError("v_max must be positive");
  if (!(v_cong < 0.0) || !std::isfinite(v_cong)) throw DomainError("v_cong must be negative");
}

GridSpec GridSpec::resized(std::size_t new_nx, std::size_t new_nt) const {
  GridSpec out = *this;
  out.nx = new_nx;
  out.nt = new_nt;
  return out;
}

SpeedField::SpeedField(GridSpec spec, std::vector<double> values)
    : spec_(spec), values_(std::move(values)) {
  spec_.validate();
  if (values_.size() != spec_.cells()) {
    throw ShapeError("speed field has " + std::to_string(values_.size()) + " values, grid expects " +
                     std::to_string(spec_.cells()));
  }
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const double v = values_[k];
    if (!(v >= 0.0 && v <= spec_.v_max)) {
      throw DomainError("speed " + std::to_string(v) + " outside [0, v_max] at " +
                        cell_name(k / spec_.nt, k % spec_.nt));
    }
  }
}

SpeedField SpeedField::filled(const GridSpec& spec, double v) {
  return SpeedField(spec, std::vector<double>(spec.cells(), v));
}

PartialField::PartialField(GridSpec spec, std::vector<double> rgb, std::vector<std::uint8_t> observed)
    : spec_(spec), rgb_(std::move(rgb)), observed_(std::move(observed)) {
  spec_.validate();
  if (rgb_.size() != spec_.cells() * 3 || observed_.size() != spec_.cells()) {
    throw ShapeError("partial field arrays do not match a " + std::to_string(spec_.nx) + "x" +
                     std::to_string(spec_.nt) + " grid");
  }
  for (std::size_t k = 0; k < observed_.size(); ++k) {
    const double* px = &rgb_[k * 3];
    for (int c = 0; c < 3; ++c) {
      if (!(px[c] >= 0.0 && px[c] <= 1.0)) {
        throw DomainError("rgb value outside [0,1] at " + cell_name(k / spec_.nt, k % spec_.nt));
      }
    }
    if (observed_[k] == 0 && (px[0] != 0.0 || px[1] != 0.0 || px[2] != 0.0)) {
      throw DomainError("unobserved " + cell_name(k / spec_.nt, k % spec_.nt) + " is not black");
    }
    if (observed_[k] != 0 && (px[2] != 0.0 || (px[0] != 1.0 && px[1] != 1.0))) {
      throw DomainError("observed " + cell_name(k / spec_.nt, k % spec_.nt) + " is off the colormap");
    }
    observed_[k] = observed_[k] != 0 ? 1 : 0;
  }
}

PartialField PartialField::empty(const GridSpec& spec) {
  return PartialField(spec, std::vector<double>(spec.cells() * 3, 0.0),
                      std::vector<std::uint8_t>(spec.cells(), 0));
}

std::size_t PartialField::observed_count() const noexcept {
  return static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), std::uint8_t{1}));
}

Rgb8 colormap_encode(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("normalized speed " + std::to_string(u) + " outside [0,1]");
  if (u <= 0.5) {
    return {255, static_cast<std::uint8_t>(std::lround(510.0 * u)), 0};
  }
  return {static_cast<std::uint8_t>(std::lround(510.0 * (1.0 - u))), 255, 0};
}

std::optional<double> colormap_decode(Rgb8 rgb) {
  if (rgb.r == 0 && rgb.g == 0 && rgb.b == 0) return std::nullopt;
  const bool on_curve = rgb.b <= 1 && (rgb.r >= 254 || rgb.g >= 254);
  if (!on_curve) {
    throw DecodeError("color (" + std::to_string(rgb.r) + "," + std::to_string(rgb.g) + "," +
                      std::to_string(rgb.b) + ") is not on the speed colormap");
  }
  if (rgb.r >= rgb.g) return static_cast<double>(rgb.g) / 510.0;
  return static_cast<double>(510 - rgb.r) / 510.0;
}

Rgb8 to_bytes(double r, double g, double b) {
  auto q = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
  return {q(r), q(g), q(b)};
}

PartialField encode_partial(std::span<const std::optional<double>> speeds, const GridSpec& spec) {
  spec.validate();
  if (speeds.size() != spec.cells()) {
    throw ShapeError("expected " + std::to_string(spec.cells()) + " cells, got " +
                     std::to_string(speeds.size()));
  }
  std::vector<double> rgb(spec.cells() * 3, 0.0);
  std::vector<std::uint8_t> observed(spec.cells(), 0);
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    if (!speeds[k]) continue;
    const double v = *speeds[k];
    if (!(v >= 0.0 && v <= spec.v_max)) {
      throw DomainError("speed " + std::to_string(v) + " outside [0, v_max] at " +
                        cell_name(k / spec.nt, k % spec.nt));
    }
    const Rgb8 px = colormap_encode(v / spec.v_max);
    rgb[k * 3 + 0] = px.r / 255.0;
    rgb[k * 3 + 1] = px.g / 255.0;
    rgb[k * 3 + 2] = px.b / 255.0;
    observed[k] = 1;
  }
  return PartialField(spec, std::move(rgb), std::move(observed));
}

std::vector<std::optional<double>> decode_partial(const PartialField& field) {
  const GridSpec& spec = field.spec();
  std::vector<std::optional<double>> out(spec.cells());
  const auto rgb = field.rgb();
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!field.observed()[k]) continue;
    try {
      const auto u = colormap_decode(to_bytes(rgb[k * 3], rgb[k * 3 + 1], rgb[k * 3 + 2]));
      if (!u) throw DecodeError("observed cell is black");
      out[k] = *u * spec.v_max;
    } catch (const DecodeError& e) {
      throw DecodeError(cell_name(k / spec.nt, k % spec.nt) + ": " + e.what());
    }
  }
  return out;
}

SpeedField window(const SpeedField& field, std::size_t x0, std::size_t t0, std::size_t wx, std::size_t wt) {
  check_window(field.spec(), x0, t0, wx, wt);
  std::vector<double> values;
  values.reserve(wx * wt);
  for (std::size_t ix = x0; ix < x0 + wx; ++ix) {
    const auto row = field.values().subspan(ix * field.spec().nt + t0, wt);
    values.insert(values.end(), row.begin(), row.end());
  }
  return SpeedField(field.spec().resized(wx, wt), std::move(values));
}

PartialField window(const PartialField& field, std::size_t x0, std::size_t t0, std::size_t wx,
                    std::size_t wt) {
  check_window(field.spec(), x0, t0, wx, wt);
  const std::size_t nt = field.spec().nt;
  std::vector<double> rgb;
  std::vector<std::uint8_t> observed;
  rgb.reserve(wx * wt * 3);
  observed.reserve(wx * wt);
  for (std::size_t ix = x0; ix < x0 + wx; ++ix) {
    const auto rgb_row = field.rgb().subspan((ix * nt + t0) * 3, wt * 3);
    const auto obs_row = field.observed().subspan(ix * nt + t0, wt);
    rgb.insert(rgb.end(), rgb_row.begin(), rgb_row.end());
    observed.insert(observed.end(), obs_row.begin(), obs_row.end());
  }
  return PartialField(field.spec().resized(wx, wt), std::move(rgb), std::move(observed));
}

std::vector<Rgb8> colorize(const SpeedField& field) {
  std::vector<Rgb8> out;
  out.reserve(field.spec().cells());
  for (double v : field.values()) out.push_back(colormap_encode(std::clamp(v / field.spec().v_max, 0.0, 1.0)));
  return out;
}

std::vector<Rgb8> colorize(const PartialField& field) {
  std::vector<Rgb8> out(field.spec().cells());
  const auto rgb = field.rgb();
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (field.observed()[k]) out[k] = to_bytes(rgb[k * 3], rgb[k * 3 + 1], rgb[k * 3 + 2]);
  }
  return out;
}

}  // namespace atse
