// SPDX-License-Identifier: Apache-2.0
/**
 * @file   binary_io.hpp
 * @brief  Little-endian primitives shared by the feature cache and the
 *         weights file.
 */
#ifndef STDET_BINARY_IO_HPP_
#define STDET_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stdet {

class BinaryFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path &path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_)
      throw BinaryFormatError("cannot write " + path.string());
  }

  void bytes(const void *p, std::size_t n) {
    out_.write(static_cast<const char *>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
      b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void string32(const std::string &s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void floats(std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(float));
    } else {
      for (float f : v)
        u32(std::bit_cast<std::uint32_t>(f));
    }
  }
  void close() {
    out_.flush();
    if (!out_)
      throw BinaryFormatError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path &path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_)
      throw BinaryFormatError("cannot open " + path.string());
  }

  void bytes(void *p, std::size_t n) {
    if (!in_.read(static_cast<char *>(p), static_cast<std::streamsize>(n)))
      throw BinaryFormatError(path_.string() + ": truncated file");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::string string32() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void floats(std::span<float> v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(float));
    } else {
      for (float &f : v)
        f = std::bit_cast<float>(u32());
    }
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace stdet

#endif  // STDET_BINARY_IO_HPP_
