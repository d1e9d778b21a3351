#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ftpg/tensor.hpp"

namespace ftpg {

inline constexpr char kContainerMagic[4] = {'F', 'T', 'P', 'G'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Binary tensor container shared by checkpoints, world dumps and embedding
/// tables. All integers are little-endian.
///
///   "FTPG"  u32 version  u32 tensor_count
///   per tensor: u32 name_len, name bytes, u32 rank, u32 dims[rank], f64 values
///   u32 text_len, text bytes     (free-form echo, e.g. the run config)
///   u32 round
struct Container {
  std::vector<NamedTensor> tensors;
  std::string text;
  std::uint32_t round = 0;

  const Tensor* find(std::string_view name) const;
};

std::string encode_container(const Container& container);

/// Throws FormatError carrying the byte offset of the first inconsistency.
/// Nothing is returned on failure.
Container decode_container(std::string_view bytes);

/// Writes through a temporary file and renames, so readers never see a
/// partial file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

}  // namespace ftpg
