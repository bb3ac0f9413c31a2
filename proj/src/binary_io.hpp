#pragma once

// Little-endian primitives shared by the store snapshot and the checkpoint
// container. Hosts are assumed little-endian (checked at compile time).

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "pathise/types.hpp"

namespace pathise::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, std::string_view what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw format_error("truncated binary file while reading " + std::string(what));
  return value;
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::string_view what) {
  auto n = read_pod<std::uint32_t>(in, what);
  if (n > (1u << 30)) throw format_error("implausible string length while reading " + std::string(what));
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw format_error("truncated binary file while reading " + std::string(what));
  return s;
}

inline void write_magic(std::ostream& out, std::string_view magic, std::uint32_t version) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_pod(out, version);
}

// Returns the stored version after verifying the magic bytes.
inline std::uint32_t read_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw format_error(std::string(what) + ": bad magic header");
  return read_pod<std::uint32_t>(in, what);
}

}  // namespace pathise::io
