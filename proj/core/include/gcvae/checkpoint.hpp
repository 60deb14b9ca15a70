#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "gcvae/tensor.hpp"

namespace gcvae {

using NamedTensors = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian:
///   "GCVT" | u32 version | u64 record count |
///   per record: u32 name length | name bytes | u64 rank | u64 extent * rank | f64 payload
/// Records are written in name order, so equal inputs give equal bytes.
std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace gcvae
