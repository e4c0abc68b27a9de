#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dsnet/tensor.hpp"

namespace dsnet {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Binary tensor container:
///   "DSNT" | version u32 | count u32 | count × record
///   | optimizer count u32 | optimizer count × record
/// record = name_len u32 | UTF-8 name | rank u32 | dims u32[rank] | f32 LE payload.
/// Values are stored at float32.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<NamedArray> tensors;
  std::vector<NamedArray> optimizer;

  const NamedArray* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace dsnet
