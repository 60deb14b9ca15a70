#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace gcvae::npz {

/// One .npy array: dtype descriptor (e.g. "|u1", "<i8"), C-order shape and raw payload.
struct Array {
  std::string descr;
  std::vector<std::size_t> shape;
  bool fortran_order = false;
  std::vector<std::uint8_t> data;

  std::size_t numel() const;
  /// Byte width parsed from descr; 0 for variable-width dtypes such as objects.
  std::size_t item_size() const;
};

Array parse_npy(std::vector<std::uint8_t> bytes);
std::vector<std::uint8_t> encode_npy(const Array& a);

using Archive = std::map<std::string, Array>;

/// Reads a .npz (zip of .npy members, stored or deflated, zip64 aware). Member keys drop
/// the ".npy" suffix. When `only` is given, other members are skipped without inflating.
Archive read_npz(const std::filesystem::path& path, const std::optional<std::set<std::string>>& only = {});
Archive parse_npz(std::string_view bytes, const std::optional<std::set<std::string>>& only = {});

/// Writes members uncompressed.
std::string encode_npz(const Archive& archive);
void write_npz(const Archive& archive, const std::filesystem::path& path);

}  // namespace gcvae::npz
