#pragma once

// Little-endian primitives for the checkpoint and dataset binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "nlab/error.hpp"

namespace nlab::detail {

template <typename T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

// Reads with byte-offset tracking so malformed files report where they broke.
class LeReader {
 public:
  explicit LeReader(std::istream& in) : in_(in) {}

  template <typename T>
  T read(const char* what) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
      throw ParseError(std::string("unexpected end of file reading ") + what, offset_);
    }
    offset_ += sizeof(T);
    return to_little(v);
  }

  void expect_magic(const char (&magic)[5]) {
    char buf[4] = {};
    in_.read(buf, 4);
    if (in_.gcount() != 4 || std::memcmp(buf, magic, 4) != 0) {
      throw ParseError(std::string("bad magic, expected ") + magic, offset_);
    }
    offset_ += 4;
  }

  std::size_t offset() const noexcept { return offset_; }

  bool at_end() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace nlab::detail
