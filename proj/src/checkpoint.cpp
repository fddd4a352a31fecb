#include "typespace/checkpoint.hpp"

#include "binio.hpp"

#include <fstream>
#include <sstream>

namespace typespace {

namespace binio {

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, const std::string &data) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out)
    throw DataError("write failed for '" + path + "'");
}

} // namespace binio

namespace {
constexpr std::string_view kMagic = "TSCK";
}

std::string encode_checkpoint(const Checkpoint &c) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(c.dim));
  w.u32(static_cast<std::uint32_t>(c.vocabulary.size()));
  w.u32(static_cast<std::uint32_t>(c.meta.size()));
  for (const auto &[k, v] : c.meta) {
    w.str(k);
    w.str(v);
  }
  for (const auto &s : c.vocabulary)
    w.str(s);
  w.u32(static_cast<std::uint32_t>(c.classes.size()));
  for (const auto &s : c.classes)
    w.str(s);
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const Tensor &t = c.params.value(static_cast<int>(i));
    w.str(c.params.name(static_cast<int>(i)));
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(t.rows));
    w.u32(static_cast<std::uint32_t>(t.cols));
    for (double v : t.data)
      w.f32(static_cast<float>(v));
  }
  return w.data();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (bytes.size() < 4 || r.bytes(4) != kMagic)
    r.fail("bad magic number");
  std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    r.fail("unsupported version " + std::to_string(version));
  Checkpoint c;
  c.dim = r.u32();
  std::uint32_t vocab = r.u32();
  std::uint32_t meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str();
    c.meta[k] = r.str();
  }
  for (std::uint32_t i = 0; i < vocab; ++i)
    c.vocabulary.push_back(r.str());
  std::uint32_t classes = r.u32();
  for (std::uint32_t i = 0; i < classes; ++i)
    c.classes.push_back(r.str());
  std::uint32_t tensors = r.u32();
  for (std::uint32_t i = 0; i < tensors; ++i) {
    std::string name = r.str();
    std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 2)
      r.fail("unsupported tensor rank " + std::to_string(rank));
    std::size_t rows = r.u32();
    std::size_t cols = rank == 2 ? r.u32() : 1;
    if (rank == 1)
      std::swap(rows, cols);
    Tensor t(rows, cols);
    for (double &v : t.data)
      v = r.f32();
    if (c.params.has(name))
      r.fail("duplicate tensor '" + name + "'");
    c.params.add(name, std::move(t));
  }
  if (!r.at_end())
    r.fail("trailing data");
  return c;
}

void save_checkpoint(const std::string &path, const Checkpoint &c) {
  binio::write_file(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::string &path) {
  return decode_checkpoint(binio::read_file(path));
}

} // namespace typespace
