#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cleargcd {

namespace detail {

template <class T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Raw little-endian array of T.
template <class T>
void write_le_blob(const std::filesystem::path& path, const std::vector<T>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (T v : values) {
    if constexpr (std::endian::native == std::endian::big) v = detail::byteswap_value(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <class T>
std::vector<T> read_le_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size % sizeof(T) != 0)
    throw std::runtime_error(path.string() + " size " + std::to_string(size) + " is not a multiple of " +
                             std::to_string(sizeof(T)));
  std::vector<T> values(size / sizeof(T));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("read failed: " + path.string());
  if constexpr (std::endian::native == std::endian::big)
    for (T& v : values) v = detail::byteswap_value(v);
  return values;
}

}  // namespace cleargcd
