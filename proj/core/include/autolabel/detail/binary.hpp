#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "autolabel/errors.hpp"

// Little-endian scalar IO for the artifact's binary formats. The formats are
// defined little-endian; on big-endian hosts these helpers would need byte
// swaps, which we do not support.
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace autolabel::detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw DataError("truncated read: " + what);
  return value;
}

template <typename T>
void write_le_array(std::ostream& os, const T* data, size_t count) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(data), sizeof(T) * count);
}

template <typename T>
void read_le_array(std::istream& is, T* data, size_t count,
                   const std::string& what) {
  static_assert(std::is_trivially_copyable_v<T>);
  is.read(reinterpret_cast<char*>(data), sizeof(T) * count);
  if (!is) throw DataError("truncated read: " + what);
}

}  // namespace autolabel::detail
