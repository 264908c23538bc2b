#pragma once

// Little-endian primitive encoding shared by the field and model formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "atse/errors.hpp"

namespace atse::detail {

template <typename T>
concept Primitive = std::is_arithmetic_v<T>;

template <Primitive T>
void put(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  template <Primitive T>
  T get(const char* what) {
    std::array<char, sizeof(T)> bytes;
    in_.read(bytes.data(), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
      throw FormatError(std::string("truncated input while reading ") + what, offset_ + in_.gcount());
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  void expect_magic(const char (&magic)[5]) {
    char got[4];
    in_.read(got, 4);
    if (in_.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + magic, offset_);
    }
    offset_ += 4;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload", offset_);
  }

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace atse::detail
