#pragma once

// Little-endian primitive encoding shared by the model file formats.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "khtext/error.hpp"

namespace khtext::io {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void magic(const char (&tag)[5]) { out_.write(tag, 4); }

  template <typename T>
  void pod(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bytes, bytes + sizeof(T));
    }
    out_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }

  void u8(std::uint8_t v) { pod(v); }
  void u32(std::uint32_t v) { pod(v); }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <typename T>
  void array(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      out_.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size_bytes()));
    } else {
      for (T v : values) pod(v);
    }
  }

  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw Error("failed writing " + path);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  void expect_magic(const char (&tag)[5]) {
    char got[4] = {0, 0, 0, 0};
    in_.read(got, 4);
    if (in_.gcount() != 4 || std::memcmp(got, tag, 4) != 0) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(tag, 4) + "\"");
    }
  }

  template <typename T>
  T pod() {
    unsigned char bytes[sizeof(T)];
    read_exact(reinterpret_cast<char*>(bytes), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bytes, bytes + sizeof(T));
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::uint8_t u8() { return pod<std::uint8_t>(); }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }

  std::string str() {
    std::uint32_t n = u32();
    std::string s(n, '\0');
    read_exact(s.data(), n);
    return s;
  }

  template <typename T>
  void array(std::span<T> out) {
    if constexpr (std::endian::native == std::endian::little) {
      read_exact(reinterpret_cast<char*>(out.data()), out.size_bytes());
    } else {
      for (T& v : out) v = pod<T>();
    }
  }

  /// Guards allocations driven by counts read from the file.
  void check_count(std::uint64_t count, std::uint64_t limit, const char* field) const {
    if (count > limit) {
      throw FormatError(what_ + ": implausible " + field + " " + std::to_string(count));
    }
  }

  void expect_eof() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(what_ + ": trailing bytes after model payload");
    }
  }

  const std::string& what() const { return what_; }

 private:
  void read_exact(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(what_ + ": truncated file");
    }
  }

  std::istream& in_;
  std::string what_;
};

}  // namespace khtext::io
