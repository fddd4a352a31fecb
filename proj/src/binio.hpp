#pragma once

// Little-endian binary encoding shared by the checkpoint and map formats.

#include "typespace/errors.hpp"

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace typespace::binio {

class Writer {
public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::string &data() const { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  std::string str() {
    std::uint32_t n = u32();
    return std::string(bytes(n));
  }
  bool at_end() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string &msg) const {
    throw DataError(what_ + ": " + msg + " at byte " + std::to_string(pos_));
  }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      fail("truncated");
  }
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string &path);
void write_file(const std::string &path, const std::string &data);

} // namespace typespace::binio
