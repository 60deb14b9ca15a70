#include <cstdint>

#include "gcvae/dataset.hpp"
#include "gcvae/errors.hpp"

namespace gcvae::data {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t be32(std::string_view bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) throw LengthError(std::string(what) + ": header truncated");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

}  // namespace

Dataset parse_mnist_idx(std::string_view image_bytes, std::string_view label_bytes) {
  if (be32(image_bytes, 0, "IDX images") != kImageMagic) throw FormatError("IDX images: bad magic");
  if (be32(label_bytes, 0, "IDX labels") != kLabelMagic) throw FormatError("IDX labels: bad magic");
  const std::size_t count = be32(image_bytes, 4, "IDX images");
  const std::size_t rows = be32(image_bytes, 8, "IDX images");
  const std::size_t cols = be32(image_bytes, 12, "IDX images");
  const std::size_t label_count = be32(label_bytes, 4, "IDX labels");
  if (label_count != count) {
    throw LengthError("IDX: " + std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
  }
  const std::size_t payload = count * rows * cols;
  if (image_bytes.size() < 16 + payload) {
    throw LengthError("IDX images: expected " + std::to_string(payload) + " pixel bytes, found " +
                      std::to_string(image_bytes.size() - 16));
  }
  if (label_bytes.size() < 8 + count) throw LengthError("IDX labels: payload truncated");

  Dataset ds;
  ds.name = "mnist";
  ds.n = count;
  ds.height = rows;
  ds.width = cols;
  ds.pixel_scale = 1.0 / 255.0;
  ds.pixels.assign(reinterpret_cast<const std::uint8_t*>(image_bytes.data()) + 16,
                   reinterpret_cast<const std::uint8_t*>(image_bytes.data()) + 16 + payload);
  metrics::FactorTable labels;
  labels.n = count;
  labels.cardinalities = {10};
  labels.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) labels.values[i] = static_cast<unsigned char>(label_bytes[8 + i]);
  labels.validate();
  ds.factors = std::move(labels);
  return ds;
}

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return parse_mnist_idx(read_file(images_path), read_file(labels_path));
}

}  // namespace gcvae::data
