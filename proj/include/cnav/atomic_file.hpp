#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "cnav/errors.hpp"

namespace cnav {

/// Runs `write(tmp_path)` then renames the temporary over `path`, so readers
/// never observe a partially written file.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& write) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write(tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline void write_text_atomically(const std::filesystem::path& path, std::string_view text) {
  write_atomically(path, [&](const std::filesystem::path& tmp) {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  });
}

}  // namespace cnav
