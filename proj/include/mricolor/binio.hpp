#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace mricolor::binio {

// Explicit little-endian scalar I/O so on-disk formats are byte-stable across
// hosts.

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, uint64_t v) {
  write_u32(out, static_cast<uint32_t>(v));
  write_u32(out, static_cast<uint32_t>(v >> 32));
}

inline void write_i64(std::ostream& out, int64_t v) { write_u64(out, static_cast<uint64_t>(v)); }

inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<uint32_t>(v)); }

inline bool read_u32(std::istream& in, uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
      static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
  return true;
}

inline bool read_u64(std::istream& in, uint64_t& v) {
  uint32_t lo = 0, hi = 0;
  if (!read_u32(in, lo) || !read_u32(in, hi)) return false;
  v = static_cast<uint64_t>(hi) << 32 | lo;
  return true;
}

inline bool read_i64(std::istream& in, int64_t& v) {
  uint64_t u = 0;
  if (!read_u64(in, u)) return false;
  v = static_cast<int64_t>(u);
  return true;
}

inline bool read_f32(std::istream& in, float& v) {
  uint32_t u = 0;
  if (!read_u32(in, u)) return false;
  v = std::bit_cast<float>(u);
  return true;
}

inline void write_f32_array(std::ostream& out, const float* data, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) write_f32(out, data[i]);
  }
}

inline bool read_f32_array(std::istream& in, float* data, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    return static_cast<bool>(
        in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4)));
  } else {
    for (size_t i = 0; i < n; ++i)
      if (!read_f32(in, data[i])) return false;
    return true;
  }
}

}  // namespace mricolor::binio
