#include "atse/atomic_file.hpp"

#include <fstream>
#include <system_error>

#include "atse/errors.hpp"

namespace atse {

void write_file_atomically(const std::filesystem::path& path, bool binary,
                           const std::function<void(std::ostream&)>& writer) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
      if (!out) throw Error("cannot open " + tmp.string() + " for writing");
      writer(out);
      out.flush();
      if (!out) throw Error("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

}  // namespace atse
