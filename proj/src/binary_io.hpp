#pragma once

// Little-endian primitive I/O shared by the file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "cbnn/error.hpp"

namespace cbnn::io {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  const auto offset = static_cast<long long>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw FormatError(std::string("truncated input reading ") + what + " at byte offset " +
                      std::to_string(offset));
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const char* what) {
  const auto size = get<std::uint32_t>(in, what);
  if (size > (1u << 28)) throw FormatError(std::string("implausible length for ") + what);
  std::string s(size, '\0');
  if (!in.read(s.data(), size)) throw FormatError(std::string("truncated ") + what);
  return s;
}

}  // namespace cbnn::io
