#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcvae/metrics.hpp"
#include "gcvae/tensor.hpp"

namespace gcvae::data {

/// Factor cardinalities of the sprite datasets: shape, scale, orientation, x, y.
inline const std::vector<int> kSpriteCardinalities{3, 6, 40, 32, 32};

/// Single-channel images stored as bytes; pixel value = byte * pixel_scale, always in [0,1].
/// Batches are materialized as [B,1,H,W] double tensors on demand.
struct Dataset {
  std::string name;
  std::size_t n = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
  double pixel_scale = 1.0;
  std::optional<metrics::FactorTable> factors;

  std::size_t image_size() const { return height * width; }
  double pixel(std::size_t index, std::size_t y, std::size_t x) const {
    return pixels[index * image_size() + y * width + x] * pixel_scale;
  }
  /// [rows.size(), 1, H, W]
  Tensor images(std::span<const std::size_t> rows) const;
  /// Rows in the given order, factors included.
  Dataset select(std::span<const std::size_t> rows) const;
};

/// Seeded uniform subset without replacement, in shuffled order. Throws ContractError if n > ds.n.
Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Epoch-wise shuffled mini-batch indices. Each epoch is a fresh seeded permutation of
/// [0, n); the final short batch is dropped.
class BatchStream {
 public:
  BatchStream(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t batches_per_epoch() const noexcept { return num_samples_ / batch_size_; }

 private:
  void reshuffle();

  std::size_t num_samples_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

BatchStream batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

// MNIST IDX -----------------------------------------------------------------------------

/// Parses big-endian IDX image (magic 2051) and label (magic 2049) payloads. Labels become
/// a single factor of cardinality 10.
Dataset parse_mnist_idx(std::string_view image_bytes, std::string_view label_bytes);
Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// DSprites NPZ --------------------------------------------------------------------------

/// Reads `imgs` (u1, n x 64 x 64) and `latents_classes` (i8, n x 6). Column 0 (colour) is
/// dropped; the remaining five must fit the sprite cardinalities.
Dataset load_dsprites_npz(const std::filesystem::path& path);
/// Writes a dataset with sprite factors in the same layout (colour column all zero).
void save_dsprites_npz(const Dataset& ds, const std::filesystem::path& path);

// Synthetic sprites -------------------------------------------------------------------------

/// n rows of uniformly drawn (shape, scale, orientation, x, y) factor indices.
metrics::FactorTable synth_sprite_factors(std::size_t n, std::uint64_t seed);
/// Renders binary 64x64 sprites (square, ellipse, triangle) for each factor row.
Dataset render_sprites(const metrics::FactorTable& factors);
/// synth_sprite_factors followed by render_sprites.
Dataset synth_sprites(std::size_t n, std::uint64_t seed);

std::string read_file(const std::filesystem::path& path);

}  // namespace gcvae::data
