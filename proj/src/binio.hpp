#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "vsseg/errors.hpp"

namespace vsseg::binio {

// Little-endian primitives shared by the artifact file formats.

inline void write_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

class Reader {
 public:
  Reader(const std::string& path, const std::string& what) : path_(path), what_(what) {
    in_.open(path, std::ios::binary);
    if (!in_) throw IoError("cannot open " + what + " file: " + path);
  }

  void read_bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw TruncatedFileError("truncated " + what_ + " file: " + path_);
    }
  }

  std::uint16_t read_u16() {
    unsigned char b[2];
    read_bytes(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t read_u32() {
    unsigned char b[4];
    read_bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float read_f32() {
    const std::uint32_t u = read_u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }

  void expect_eof() {
    in_.peek();
    if (!in_.eof()) {
      throw TruncatedFileError("unexpected trailing bytes in " + what_ + " file: " + path_);
    }
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::string what_;
};

}  // namespace vsseg::binio
