#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "blgcn/matrix.hpp"

namespace blgcn {

/// Named float64 tensors plus a key=value header.
///
/// Binary layout, little-endian:
///   "BLGK" u32 version(=1)
///   u32 header_count, then per entry: u32 len, key bytes, u32 len, value bytes
///   u32 tensor_count, then per tensor: u32 len, name bytes, u32 rows, u32 cols,
///   f64 × rows·cols (row-major)
/// Serialising a parsed checkpoint reproduces the input bytes exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& tensor(const std::string& name) const;
  const std::string& header_value(const std::string& key) const;
  bool has_header(const std::string& key) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace blgcn
