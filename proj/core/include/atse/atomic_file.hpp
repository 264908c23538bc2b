#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>

namespace atse {

/// Runs `writer` against a sibling temporary file and renames it onto `path`
/// only if the writer returns normally. On failure the temporary is removed
/// and `path` is left untouched.
void write_file_atomically(const std::filesystem::path& path, bool binary,
                           const std::function<void(std::ostream&)>& writer);

}  // namespace atse
