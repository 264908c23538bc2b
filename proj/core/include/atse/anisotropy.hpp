#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace atse {

enum class MaskKind { Isotropic, FreeFlow, Congested };

std::string_view to_string(MaskKind kind);
/// Accepts "isotropic", "free-flow", "congested".
MaskKind parse_mask_kind(std::string_view text);

/// Binary kernel mask. Row i is the space offset (downstream positive), column
/// j the time offset (later positive), both centred on the kernel middle.
class CausalityMask {
 public:
  CausalityMask(std::size_t kh, std::size_t kw, std::vector<std::uint8_t> bits);

  std::size_t kh() const noexcept { return kh_; }
  std::size_t kw() const noexcept { return kw_; }
  bool at(std::size_t i, std::size_t j) const { return bits_[i * kw_ + j] != 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  bool is_point_symmetric() const noexcept;

  /// `#` for active cells, `.` otherwise; one line per space offset, upstream
  /// row first.
  std::string to_ascii() const;

  bool operator==(const CausalityMask&) const = default;

 private:
  std::size_t kh_;
  std::size_t kw_;
  std::vector<std::uint8_t> bits_;
};

/// Kernel mask for the given propagation regime. With δx = (i − (kh−1)/2)·dx
/// and δt = (j − (kw−1)/2)·dt:
///   Isotropic  every offset;
///   FreeFlow   the centre, plus δt ≠ 0 with 0 ≤ δx/δt ≤ v_max;
///   Congested  the centre, plus δt ≠ 0 with v_cong ≤ δx/δt ≤ 0.
/// Offsets with δt = 0 and δx ≠ 0 are never active in the causal masks.
/// Throws DomainError for even kernel sizes, v_max ≤ 0, v_cong ≥ 0.
CausalityMask build_mask(MaskKind kind, std::size_t kh, std::size_t kw, double dx, double dt, double v_max,
                         double v_cong);

std::size_t count_active(const CausalityMask& mask);

}  // namespace atse
