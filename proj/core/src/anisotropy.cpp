#include "atse/anisotropy.hpp"

#include <algorithm>
#include <cmath>

#include "atse/errors.hpp"

namespace atse {

std::string_view to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::Isotropic: return "isotropic";
    case MaskKind::FreeFlow: return "free-flow";
    case MaskKind::Congested: return "congested";
  }
  return "unknown";
}

MaskKind parse_mask_kind(std::string_view text) {
  if (text == "isotropic") return MaskKind::Isotropic;
  if (text == "free-flow") return MaskKind::FreeFlow;
  if (text == "congested") return MaskKind::Congested;
  throw DomainError("unknown mask kind '" + std::string(text) + "' (isotropic, free-flow, congested)");
}

CausalityMask::CausalityMask(std::size_t kh, std::size_t kw, std::vector<std::uint8_t> bits)
    : kh_(kh), kw_(kw), bits_(std::move(bits)) {
  if (kh_ % 2 == 0 || kw_ % 2 == 0) throw DomainError("mask dimensions must be odd");
  if (bits_.size() != kh_ * kw_) throw ShapeError("mask bit count does not match kernel size");
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
  if (!at(kh_ / 2, kw_ / 2)) throw DomainError("mask centre must be active");
}

bool CausalityMask::is_point_symmetric() const noexcept {
  for (std::size_t i = 0; i < kh_; ++i) {
    for (std::size_t j = 0; j < kw_; ++j) {
      if (at(i, j) != at(kh_ - 1 - i, kw_ - 1 - j)) return false;
    }
  }
  return true;
}

std::string CausalityMask::to_ascii() const {
  std::string out;
  out.reserve(kh_ * (kw_ + 1));
  for (std::size_t i = 0; i < kh_; ++i) {
    for (std::size_t j = 0; j < kw_; ++j) out.push_back(at(i, j) ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

CausalityMask build_mask(MaskKind kind, std::size_t kh, std::size_t kw, double dx, double dt, double v_max,
                         double v_cong) {
  if (kh % 2 == 0 || kw % 2 == 0) throw DomainError("kernel dimensions must be odd");
  if (!(dx > 0.0) || !(dt > 0.0)) throw DomainError("dx and dt must be positive");
  if (!(v_max > 0.0)) throw DomainError("v_max must be positive");
  if (!(v_cong < 0.0)) throw DomainError("v_cong must be negative");

  const auto rx = static_cast<long>(kh / 2);
  const auto rt = static_cast<long>(kw / 2);
  std::vector<std::uint8_t> bits(kh * kw, 0);
  for (long a = -rx; a <= rx; ++a) {
    for (long b = -rt; b <= rt; ++b) {
      bool on = false;
      if (a == 0 && b == 0) {
        on = true;
      } else if (kind == MaskKind::Isotropic) {
        on = true;
      } else if (b != 0) {
        // Compare slopes without dividing: s = δx·sign(δt), limit·|δt|.
        const double s = static_cast<double>(b > 0 ? a : -a) * dx;
        const double span = static_cast<double>(std::labs(b)) * dt;
        on = kind == MaskKind::FreeFlow ? (s >= 0.0 && s <= v_max * span) : (s <= 0.0 && s >= v_cong * span);
      }
      bits[static_cast<std::size_t>(a + rx) * kw + static_cast<std::size_t>(b + rt)] = on ? 1 : 0;
    }
  }
  return CausalityMask(kh, kw, std::move(bits));
}

std::size_t count_active(const CausalityMask& mask) {
  return static_cast<std::size_t>(std::count(mask.bits().begin(), mask.bits().end(), std::uint8_t{1}));
}

}  // namespace atse
