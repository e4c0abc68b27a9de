#include "dsnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dsnet/error.hpp"

namespace dsnet {
namespace {

constexpr char kMagic[4] = {'D', 'S', 'N', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_record(std::ostream& os, const NamedArray& a) {
  if (a.values.size() != shape_numel(a.shape)) {
    throw ValidationError("checkpoint: record '" + a.name + "' has inconsistent shape");
  }
  put_u32(os, static_cast<std::uint32_t>(a.name.size()));
  os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
  put_u32(os, static_cast<std::uint32_t>(a.shape.size()));
  for (auto d : a.shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : a.values) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

NamedArray get_record(std::istream& is) {
  NamedArray a;
  const auto len = get_u32(is);
  if (len > (1u << 16)) throw IoError("checkpoint: implausible name length");
  a.name.resize(len);
  if (!is.read(a.name.data(), len)) throw IoError("checkpoint: truncated name");
  const auto rank = get_u32(is);
  if (rank > 8) throw IoError("checkpoint: implausible rank for '" + a.name + "'");
  for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(get_u32(is));
  const auto n = shape_numel(a.shape);
  a.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.values[i] = std::bit_cast<float>(get_u32(is));
  return a;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, Checkpoint::kVersion);
  put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) put_record(os, t);
  put_u32(os, static_cast<std::uint32_t>(ckpt.optimizer.size()));
  for (const auto& t : ckpt.optimizer) put_record(os, t);
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a DSNT checkpoint: " + path.string());
  }
  const auto version = get_u32(is);
  if (version != Checkpoint::kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto count = get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(get_record(is));
  const auto opt_count = get_u32(is);
  for (std::uint32_t i = 0; i < opt_count; ++i) ckpt.optimizer.push_back(get_record(is));
  return ckpt;
}

}  // namespace dsnet
