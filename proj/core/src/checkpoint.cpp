#include "gcvae/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "gcvae/errors.hpp"

namespace gcvae {
namespace {

constexpr std::string_view kMagic = "GCVT";

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get_le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw LengthError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint64_t>(out, t.rank());
    for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

NamedTensors decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw FormatError("not a checkpoint: bad magic");
  const auto version = in.get_le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get_le<std::uint64_t>();
  NamedTensors tensors;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = in.get_le<std::uint32_t>();
    std::string name(in.take(name_len));
    const auto rank = in.get_le<std::uint64_t>();
    if (rank > 8) throw FormatError("record '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = in.get_le<std::uint64_t>();
    Storage data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(in.get_le<std::uint64_t>());
    if (!tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError("duplicate checkpoint record '" + name + "'");
    }
  }
  if (!in.done()) throw FormatError("trailing bytes after last checkpoint record");
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace gcvae
