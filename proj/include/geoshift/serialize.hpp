#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "geoshift/errors.hpp"

namespace geoshift {

/// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320). Check value:
/// crc32("123456789") == 0xCBF43926.
inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = ~seed;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

inline uint32_t crc32(const std::string& s) {
  return crc32(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

/// Little-endian byte buffer builder.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) { put_le(v); }
  void u32(uint32_t v) { put_le(v); }
  void u64(uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }

  const std::string& buffer() const { return buf_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

/// Bounds-checked little-endian reader; running past the end raises
/// truncation_error.
class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}
  explicit ByteReader(const std::string& s)
      : ByteReader(reinterpret_cast<const uint8_t*>(s.data()), s.size()) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() { return get_le<uint16_t>(); }
  uint32_t u32() { return get_le<uint32_t>(); }
  uint64_t u64() { return get_le<uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<uint64_t>()); }
  std::string str(size_t n) {
    const uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  size_t remaining() const { return len_ - pos_; }
  bool done() const { return pos_ == len_; }

 private:
  const uint8_t* take(size_t n) {
    if (pos_ + n > len_) throw truncation_error("payload truncated");
    const uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T get_le() {
    const uint8_t* p = take(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
  }
  const uint8_t* data_;
  size_t len_;
  size_t pos_ = 0;
};

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

/// Appends the CRC-32 of `payload` and writes payload+crc to disk.
inline void write_file_crc(const std::filesystem::path& path, const std::string& payload) {
  ByteWriter trailer;
  trailer.u32(crc32(payload));
  write_file(path, payload + trailer.buffer());
}

/// Splits a file into payload and verified state. The caller parses the
/// payload first (so structural truncation is reported as such) and calls
/// verify() afterwards.
struct CheckedFile {
  std::string payload;
  uint32_t stored_crc = 0;

  static CheckedFile load(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < 4) throw truncation_error("file shorter than CRC trailer");
    CheckedFile f;
    f.payload = bytes.substr(0, bytes.size() - 4);
    ByteReader r(reinterpret_cast<const uint8_t*>(bytes.data() + bytes.size() - 4), 4);
    f.stored_crc = r.u32();
    return f;
  }

  void verify() const {
    if (crc32(payload) != stored_crc) throw checksum_error("CRC mismatch");
  }
};

}  // namespace geoshift
