#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pdewb/errors.hpp"

namespace pdewb {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t len = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(len));
    off += len;
  }
  return static_cast<std::uint32_t>(c);
}

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.append(s); }
  void put_f32(std::span<const double> v) {
    for (double x : v) put(static_cast<float>(x));
  }
  void put_f32(std::span<const float> v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  /// Appends the CRC32 of everything written so far.
  void seal() { put(crc32_of(buf_)); }

  const std::string& bytes() const { return buf_; }

private:
  std::string buf_;
};

/// Bounds-checked reader; running past the end raises FormatError.
class ByteReader {
public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return std::string(get_bytes(get<std::uint32_t>())); }
  void get_f32(std::span<double> out) {
    for (double& x : out) x = static_cast<double>(get<float>());
  }
  void get_f32(std::span<float> out) {
    const auto b = get_bytes(out.size() * sizeof(float));
    std::memcpy(out.data(), b.data(), b.size());
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated payload");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Verifies the trailing CRC32 and returns the payload without it.
inline std::string_view checked_payload(std::string_view file) {
  if (file.size() < 4) throw FormatError("truncated payload");
  const std::string_view body = file.substr(0, file.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, file.data() + body.size(), 4);
  if (crc32_of(body) != stored) throw ChecksumError("checksum mismatch");
  return body;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return data;
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to '" + path.string() + "' failed: " + ec.message());
}

} // namespace pdewb
