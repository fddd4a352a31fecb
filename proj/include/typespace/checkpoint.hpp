#pragma once

#include "typespace/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace typespace {

/// Everything needed to rebuild a trained encoder.
///
/// File layout (little-endian): "TSCK", u32 version, u32 D, u32 vocabulary
/// size, u32 metadata count, (str key, str value)*, vocabulary strings, u32
/// class count, class strings, u32 tensor count, then per tensor: str name,
/// u32 rank, u32 dims..., 32-bit floats in row-major order. A str is a u32
/// length followed by UTF-8 bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::size_t dim = 0;
  std::vector<std::string> vocabulary;
  std::vector<std::string> classes;
  std::map<std::string, std::string> meta;
  ParamStore params;

  friend bool operator==(const Checkpoint &, const Checkpoint &) = default;
};

std::string encode_checkpoint(const Checkpoint &c);
/// Throws DataError on a bad magic number, version or truncated data.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string &path, const Checkpoint &c);
Checkpoint load_checkpoint(const std::string &path);

} // namespace typespace
