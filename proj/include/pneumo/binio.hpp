#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "pneumo/errors.hpp"

namespace pneumo {

/// Little-endian byte writer/reader for the on-disk formats. Encoding is
/// explicit byte composition, so files are identical on any host.
struct ByteWriter {
  std::string bytes;

  void put_raw(const void* p, std::size_t n) {
    bytes.append(static_cast<const char*>(p), n);
  }
  void put_u8(std::uint8_t v) { bytes.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_f64(double d) { put_u64(std::bit_cast<std::uint64_t>(d)); }
  void put_string(const std::string& s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    bytes.append(s);
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
  }
};

struct ByteReader {
  std::string bytes;
  std::size_t pos = 0;

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    ByteReader r;
    r.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
  }

  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw IoError("truncated file: need " + std::to_string(n) + " bytes at offset " +
                    std::to_string(pos) + ", have " + std::to_string(bytes.size() - pos));
  }
  void get_raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  std::uint8_t get_u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get_u64()); }
  std::string get_string() {
    const std::uint32_t n = get_u32();
    need(n);
    std::string s(bytes.data() + pos, n);
    pos += n;
    return s;
  }
  bool exhausted() const { return pos == bytes.size(); }
};

}  // namespace pneumo
