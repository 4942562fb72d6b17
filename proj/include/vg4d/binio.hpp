// SPDX-License-Identifier: Apache-2.0
//
// Little-endian primitives shared by the binary file formats. Encoding is
// explicit so files are byte-identical across hosts.
#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "vg4d/common.hpp"

namespace vg4d::binio {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_bytes(std::ostream& os, const std::string& s) { os.write(s.data(), static_cast<std::streamsize>(s.size())); }

/// Reads exactly n bytes or throws FormatError naming the stream offset.
inline void read_exact(std::istream& is, void* dst, std::size_t n, const std::string& what) {
  const auto pos = is.tellg();
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError("truncated read of " + what + " at byte offset " +
                      std::to_string(static_cast<long long>(pos)));
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, const std::string& what) {
  const std::uint32_t bits = get_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string get_bytes(std::istream& is, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n > 0) read_exact(is, s.data(), n, what);
  return s;
}

/// Consumes the magic or throws FormatError quoting both strings.
inline void expect_magic(std::istream& is, const std::string& magic, const std::string& path) {
  const std::string got = get_bytes(is, magic.size(), "magic of " + path);
  if (got != magic)
    throw FormatError(path + ": bad magic, expected \"" + magic + "\"");
}

}  // namespace vg4d::binio
