#include "epidenet/io_util.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace epidenet {

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open file: " + path.string());
  f.seekg(0, std::ios::end);
  const std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) throw FormatError("failed reading file: " + path.string());
  return buf;
}

void atomic_write_bytes(const std::filesystem::path& path, const void* data, size_t size) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open file for writing: " + tmp.string());
    if (size > 0) f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!f) throw FormatError("failed writing file: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  atomic_write_bytes(path, text.data(), text.size());
}

std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace epidenet
