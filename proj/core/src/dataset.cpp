#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include "gcvae/dataset.hpp"
#include "gcvae/errors.hpp"

namespace gcvae::data {

Tensor Dataset::images(std::span<const std::size_t> rows) const {
  const std::size_t sz = image_size();
  Tensor out({rows.size(), 1, height, width});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b] >= n) throw ContractError("image index " + std::to_string(rows[b]) + " out of range");
    const std::uint8_t* src = pixels.data() + rows[b] * sz;
    double* dst = out.ptr() + b * sz;
    for (std::size_t i = 0; i < sz; ++i) dst[i] = src[i] * pixel_scale;
  }
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out;
  out.name = name;
  out.n = rows.size();
  out.height = height;
  out.width = width;
  out.pixel_scale = pixel_scale;
  const std::size_t sz = image_size();
  out.pixels.reserve(rows.size() * sz);
  for (std::size_t r : rows) {
    if (r >= n) throw ContractError("row " + std::to_string(r) + " out of range");
    out.pixels.insert(out.pixels.end(), pixels.begin() + static_cast<std::ptrdiff_t>(r * sz),
                      pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * sz));
  }
  if (factors) out.factors = factors->select(rows);
  return out;
}

Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.n) {
    throw ContractError("cannot subsample " + std::to_string(n) + " rows from a dataset of " + std::to_string(ds.n));
  }
  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);
  return ds.select(order);
}

BatchStream::BatchStream(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed)
    : num_samples_(num_samples), batch_size_(batch_size), rng_(seed), order_(num_samples) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (num_samples < batch_size) {
    throw ContractError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                        std::to_string(num_samples));
  }
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchStream::next() {
  if (cursor_ + batch_size_ > num_samples_) {
    ++epoch_;
    reshuffle();
  }
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return batch;
}

BatchStream batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed) {
  return BatchStream(ds.n, batch_size, seed);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace gcvae::data
