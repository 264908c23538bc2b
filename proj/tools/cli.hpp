#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "atse/dataset.hpp"
#include "atse/grid.hpp"
#include "atse/microsim.hpp"
#include "atse/nn.hpp"

namespace atse::cli {

/// Settings shared by all subcommands. Built from defaults, then a key=value
/// config file, then flags.
struct RunConfig {
  GridSpec grid;
  double coverage = 0.05;
  WindowSpec windows;
  SgdConfig sgd;
  std::uint64_t seed = 0;
  Demand demand = Demand::FreeFlow;
  double road = 1000.0;     // m
  double duration = 600.0;  // s
  double warmup = 0.0;      // s dropped before rasterizing
  double channel_scale = 1.0;
  std::size_t substeps = 10;

  /// Sets one key (dashes and underscores are interchangeable). Throws
  /// ConfigError for unknown keys or unparsable values.
  void apply(std::string_view key, std::string_view value);

  /// Throws ConfigError or DomainError.
  void validate() const;

  /// Field rows/columns covering the road and the post-warm-up span.
  std::size_t nx() const;
  std::size_t nt() const;
};

/// `key = value` lines; `#` starts a comment. Throws ParseError with the line.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Full command-line entry point. Returns 0 on success, 1 on runtime
/// failure, 2 on usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace atse::cli
