#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "epidenet/errors.hpp"

namespace epidenet {

// Whole-file helpers. Writes go through a temp file + rename so concurrent
// runs never observe partial output.
std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void atomic_write_bytes(const std::filesystem::path& path, const void* data, size_t size);
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

// Little-endian binary cursor over an in-memory buffer.
class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size, std::string context)
      : data_(data), size_(size), context_(std::move(context)) {}
  explicit ByteReader(const std::vector<uint8_t>& buf, std::string context = "buffer")
      : ByteReader(buf.data(), buf.size(), std::move(context)) {}

  template <typename T>
  T read() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    read_raw(&v, sizeof(T));
    return v;
  }

  void read_raw(void* out, size_t n) {
    if (pos_ + n > size_) {
      throw FormatError(context_ + ": truncated at byte offset " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + " more bytes, have " +
                        std::to_string(size_ - pos_) + ")");
    }
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  std::string read_string(size_t n) {
    std::string s(n, '\0');
    read_raw(s.data(), n);
    return s;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }
  bool done() const { return pos_ == size_; }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  std::string context_;
};

class ByteWriter {
 public:
  template <typename T>
  void write(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_raw(&v, sizeof(T));
  }

  void write_raw(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }

  void write_string(const std::string& s) { write_raw(s.data(), s.size()); }

  const std::vector<uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

// Fixed-format float for CSV/table output: deterministic across runs.
std::string format_fixed(double v, int decimals = 6);

}  // namespace epidenet
