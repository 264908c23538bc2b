#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace atse {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the domain of an operation (e.g. a speed above v_max).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An index window does not fit inside the container it addresses.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Array dimensions or channel counts do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: inconsistent layer chaining, empty dataset, mismatched grids.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An RGB triple that is neither black nor on the colormap curve.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Two vehicles overlap. Signals a simulator bug, never user input.
class CollisionError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. Carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Malformed text input. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace atse
