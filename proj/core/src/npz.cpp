#include "gcvae/npz.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "gcvae/dataset.hpp"
#include "gcvae/errors.hpp"

namespace gcvae::npz {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;
constexpr char kNpyMagic[] = "\x93NUMPY";

std::uint64_t le(std::string_view bytes, std::size_t offset, std::size_t width) {
  if (offset + width > bytes.size()) throw LengthError("npz: archive truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes[offset + i])} << (8 * i);
  return v;
}

void put(std::string& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Entry {
  std::string name;
  std::uint16_t method = 0;
  std::uint32_t crc = 0;
  std::uint64_t compressed = 0;
  std::uint64_t uncompressed = 0;
  std::uint64_t local_offset = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  return static_cast<std::uint32_t>(crc32_z(crc32_z(0L, Z_NULL, 0), data, size));
}

std::vector<std::uint8_t> inflate_raw(std::string_view src, std::uint64_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw FormatError("npz: inflate init failed");
  constexpr std::size_t kChunk = std::size_t{1} << 30;
  std::size_t in_pos = 0, out_pos = 0;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (zs.avail_in == 0 && in_pos < src.size()) {
      const std::size_t n = std::min(kChunk, src.size() - in_pos);
      zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(src.data() + in_pos));
      zs.avail_in = static_cast<uInt>(n);
      in_pos += n;
    }
    if (zs.avail_out == 0) {
      if (out_pos >= out.size()) break;
      const std::size_t n = std::min(kChunk, out.size() - out_pos);
      zs.next_out = out.data() + out_pos;
      zs.avail_out = static_cast<uInt>(n);
      out_pos += n;
    }
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0 && in_pos >= src.size()) break;
    if (rc != Z_OK && rc != Z_STREAM_END && rc != Z_BUF_ERROR) {
      inflateEnd(&zs);
      throw FormatError("npz: corrupt deflate stream");
    }
  }
  const std::uint64_t produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) {
    throw LengthError("npz: member inflated to " + std::to_string(produced) + " bytes, expected " +
                      std::to_string(expected));
  }
  return out;
}

std::vector<Entry> central_directory(std::string_view bytes) {
  if (bytes.size() < 22) throw LengthError("npz: file too short for a zip archive");
  std::size_t end = std::string_view::npos;
  const std::size_t lowest = bytes.size() > 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
  for (std::size_t pos = bytes.size() - 22 + 1; pos-- > lowest;) {
    if (le(bytes, pos, 4) == kEndSig) {
      end = pos;
      break;
    }
  }
  if (end == std::string_view::npos) throw FormatError("npz: end of central directory not found");

  std::uint64_t count = le(bytes, end + 10, 2);
  std::uint64_t cd_offset = le(bytes, end + 16, 4);
  if (count == 0xffff || cd_offset == 0xffffffff) {
    if (end < 20 || le(bytes, end - 20, 4) != kZip64LocatorSig) throw FormatError("npz: zip64 locator missing");
    const std::uint64_t z64 = le(bytes, end - 20 + 8, 8);
    if (le(bytes, z64, 4) != kZip64EndSig) throw FormatError("npz: zip64 end record missing");
    count = le(bytes, z64 + 32, 8);
    cd_offset = le(bytes, z64 + 48, 8);
  }

  std::vector<Entry> entries;
  std::size_t pos = cd_offset;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (le(bytes, pos, 4) != kCentralSig) throw FormatError("npz: bad central directory entry");
    Entry e;
    e.method = static_cast<std::uint16_t>(le(bytes, pos + 10, 2));
    e.crc = static_cast<std::uint32_t>(le(bytes, pos + 16, 4));
    e.compressed = le(bytes, pos + 20, 4);
    e.uncompressed = le(bytes, pos + 24, 4);
    const std::size_t name_len = le(bytes, pos + 28, 2);
    const std::size_t extra_len = le(bytes, pos + 30, 2);
    const std::size_t comment_len = le(bytes, pos + 32, 2);
    e.local_offset = le(bytes, pos + 42, 4);
    if (pos + 46 + name_len > bytes.size()) throw LengthError("npz: central directory truncated");
    e.name = std::string(bytes.substr(pos + 46, name_len));
    std::size_t x = pos + 46 + name_len;
    const std::size_t x_end = x + extra_len;
    while (x + 4 <= x_end) {
      const auto id = le(bytes, x, 2);
      const auto size = le(bytes, x + 2, 2);
      if (id == 0x0001) {
        std::size_t f = x + 4;
        if (e.uncompressed == 0xffffffff) e.uncompressed = le(bytes, f, 8), f += 8;
        if (e.compressed == 0xffffffff) e.compressed = le(bytes, f, 8), f += 8;
        if (e.local_offset == 0xffffffff) e.local_offset = le(bytes, f, 8);
      }
      x += 4 + size;
    }
    entries.push_back(std::move(e));
    pos = x_end + comment_len;
  }
  return entries;
}

std::string strip_npy(const std::string& name) {
  return name.size() > 4 && name.ends_with(".npy") ? name.substr(0, name.size() - 4) : name;
}

std::string header_value(const std::string& header, const std::string& key) {
  const std::size_t k = header.find("'" + key + "'");
  if (k == std::string::npos) throw FormatError("npy: header lacks '" + key + "'");
  const std::size_t colon = header.find(':', k);
  if (colon == std::string::npos) throw FormatError("npy: malformed header");
  std::size_t start = header.find_first_not_of(' ', colon + 1);
  if (start == std::string::npos) throw FormatError("npy: malformed header");
  if (header[start] == '(') {
    const std::size_t close = header.find(')', start);
    if (close == std::string::npos) throw FormatError("npy: unterminated shape");
    return header.substr(start, close - start + 1);
  }
  if (header[start] == '\'' || header[start] == '"') {
    const std::size_t close = header.find(header[start], start + 1);
    if (close == std::string::npos) throw FormatError("npy: unterminated string");
    return header.substr(start + 1, close - start - 1);
  }
  const std::size_t stop = header.find_first_of(",}", start);
  return header.substr(start, stop - start);
}

std::vector<std::size_t> parse_shape(const std::string& tuple) {
  std::vector<std::size_t> shape;
  std::size_t i = 1;
  while (i < tuple.size()) {
    while (i < tuple.size() && (tuple[i] == ' ' || tuple[i] == ',')) ++i;
    if (i >= tuple.size() || tuple[i] == ')') break;
    std::size_t used = 0;
    try {
      shape.push_back(std::stoull(tuple.substr(i), &used));
    } catch (const std::exception&) {
      throw FormatError("npy: bad shape " + tuple);
    }
    i += used;
  }
  return shape;
}

}  // namespace

std::size_t Array::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t Array::item_size() const {
  std::size_t i = descr.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(descr[i - 1]))) --i;
  if (i == descr.size() || descr.find('O') != std::string::npos) return 0;
  return std::stoul(descr.substr(i));
}

Array parse_npy(std::vector<std::uint8_t> bytes) {
  const std::string_view view(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (view.size() < 10 || view.substr(0, 6) != std::string_view(kNpyMagic, 6)) throw FormatError("npy: bad magic");
  const int major = static_cast<unsigned char>(view[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = le(view, 8, 2);
    offset = 10;
  } else if (major == 2 || major == 3) {
    header_len = le(view, 8, 4);
    offset = 12;
  } else {
    throw FormatError("npy: unsupported version " + std::to_string(major));
  }
  if (offset + header_len > view.size()) throw LengthError("npy: header truncated");
  const std::string header(view.substr(offset, header_len));

  Array a;
  a.descr = header_value(header, "descr");
  a.fortran_order = header_value(header, "fortran_order") == "True";
  a.shape = parse_shape(header_value(header, "shape"));
  const std::size_t data_start = offset + header_len;
  const std::size_t item = a.item_size();
  if (item > 0) {
    const std::size_t want = a.numel() * item;
    if (bytes.size() - data_start < want) {
      throw LengthError("npy: payload has " + std::to_string(bytes.size() - data_start) + " bytes, expected " +
                        std::to_string(want));
    }
  }
  bytes.erase(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
  a.data = std::move(bytes);
  return a;
}

std::vector<std::uint8_t> encode_npy(const Array& a) {
  std::string shape = "(";
  for (std::size_t i = 0; i < a.shape.size(); ++i) shape += std::to_string(a.shape[i]) + (a.shape.size() == 1 ? "," : i + 1 < a.shape.size() ? ", " : "");
  shape += ")";
  std::string header = "{'descr': '" + a.descr + "', 'fortran_order': " + (a.fortran_order ? "True" : "False") +
                       ", 'shape': " + shape + ", }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::string prefix(kNpyMagic, 6);
  prefix.push_back('\x01');
  prefix.push_back('\x00');
  put(prefix, header.size(), 2);
  std::vector<std::uint8_t> out(prefix.begin(), prefix.end());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), a.data.begin(), a.data.end());
  return out;
}

Archive parse_npz(std::string_view bytes, const std::optional<std::set<std::string>>& only) {
  Archive archive;
  for (const Entry& e : central_directory(bytes)) {
    const std::string key = strip_npy(e.name);
    if (only && !only->contains(key)) continue;
    if (le(bytes, e.local_offset, 4) != kLocalSig) throw FormatError("npz: bad local header for " + e.name);
    const std::size_t name_len = le(bytes, e.local_offset + 26, 2);
    const std::size_t extra_len = le(bytes, e.local_offset + 28, 2);
    const std::size_t start = e.local_offset + 30 + name_len + extra_len;
    if (start + e.compressed > bytes.size()) throw LengthError("npz: member " + e.name + " truncated");
    const std::string_view raw = bytes.substr(start, e.compressed);
    std::vector<std::uint8_t> payload;
    if (e.method == 0) {
      payload.assign(raw.begin(), raw.end());
    } else if (e.method == 8) {
      payload = inflate_raw(raw, e.uncompressed);
    } else {
      throw FormatError("npz: unsupported compression method " + std::to_string(e.method));
    }
    if (crc_of(payload.data(), payload.size()) != e.crc) throw FormatError("npz: CRC mismatch in " + e.name);
    archive.emplace(key, parse_npy(std::move(payload)));
  }
  return archive;
}

Archive read_npz(const std::filesystem::path& path, const std::optional<std::set<std::string>>& only) {
  return parse_npz(data::read_file(path), only);
}

std::string encode_npz(const Archive& archive) {
  std::string out, central;
  for (const auto& [key, array] : archive) {
    const std::vector<std::uint8_t> payload = encode_npy(array);
    if (payload.size() >= 0xffffffffu || out.size() >= 0xffffffffu) {
      throw ContractError("npz: members over 4 GiB are not supported for writing");
    }
    const std::string name = key + ".npy";
    const std::uint32_t crc = crc_of(payload.data(), payload.size());
    const std::size_t offset = out.size();

    put(out, kLocalSig, 4);
    put(out, 20, 2);  // version needed
    put(out, 0, 2);   // flags
    put(out, 0, 2);   // stored
    put(out, 0, 2);   // time
    put(out, 0x21, 2);  // date 1980-01-01
    put(out, crc, 4);
    put(out, payload.size(), 4);
    put(out, payload.size(), 4);
    put(out, name.size(), 2);
    put(out, 0, 2);
    out += name;
    out.append(payload.begin(), payload.end());

    put(central, kCentralSig, 4);
    put(central, 20, 2);
    put(central, 20, 2);
    put(central, 0, 2);
    put(central, 0, 2);
    put(central, 0, 2);
    put(central, 0x21, 2);
    put(central, crc, 4);
    put(central, payload.size(), 4);
    put(central, payload.size(), 4);
    put(central, name.size(), 2);
    put(central, 0, 2);  // extra
    put(central, 0, 2);  // comment
    put(central, 0, 2);  // disk
    put(central, 0, 2);  // internal attrs
    put(central, 0, 4);  // external attrs
    put(central, offset, 4);
    central += name;
  }
  const std::size_t cd_offset = out.size();
  out += central;
  put(out, kEndSig, 4);
  put(out, 0, 2);
  put(out, 0, 2);
  put(out, archive.size(), 2);
  put(out, archive.size(), 2);
  put(out, central.size(), 4);
  put(out, cd_offset, 4);
  put(out, 0, 2);
  return out;
}

void write_npz(const Archive& archive, const std::filesystem::path& path) {
  const std::string bytes = encode_npz(archive);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

}  // namespace gcvae::npz

namespace gcvae::data {

Dataset load_dsprites_npz(const std::filesystem::path& path) {
  npz::Archive archive = npz::read_npz(path, std::set<std::string>{"imgs", "latents_classes"});
  const auto imgs_it = archive.find("imgs");
  const auto cls_it = archive.find("latents_classes");
  if (imgs_it == archive.end()) throw FormatError("dsprites: archive has no 'imgs' member");
  if (cls_it == archive.end()) throw FormatError("dsprites: archive has no 'latents_classes' member");
  npz::Array& imgs = imgs_it->second;
  const npz::Array& cls = cls_it->second;

  if (imgs.descr != "|u1" && imgs.descr != "<u1") throw FormatError("dsprites: imgs dtype " + imgs.descr);
  if (imgs.shape.size() != 3) throw FormatError("dsprites: imgs must be rank 3");
  if (imgs.fortran_order || cls.fortran_order) throw FormatError("dsprites: fortran-order arrays unsupported");
  if (cls.descr != "<i8") throw FormatError("dsprites: latents_classes dtype " + cls.descr);
  const std::size_t n = imgs.shape[0];
  if (cls.shape.size() != 2 || cls.shape[0] != n || cls.shape[1] != 6) {
    throw ValidationError("dsprites: latents_classes must be " + std::to_string(n) + " x 6");
  }

  Dataset ds;
  ds.name = "dsprites";
  ds.n = n;
  ds.height = imgs.shape[1];
  ds.width = imgs.shape[2];
  imgs.data.resize(n * ds.height * ds.width);
  for (std::uint8_t v : imgs.data) {
    if (v > 1) throw ValidationError("dsprites: imgs must be binary, found " + std::to_string(v));
  }
  ds.pixels = std::move(imgs.data);
  ds.pixel_scale = 1.0;

  metrics::FactorTable f;
  f.n = n;
  f.cardinalities = kSpriteCardinalities;
  f.values.resize(n * 5);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 5; ++k) {
      std::int64_t v = 0;
      std::memcpy(&v, cls.data.data() + (i * 6 + k + 1) * 8, 8);
      if (v < 0 || v >= kSpriteCardinalities[k]) {
        throw ValidationError("dsprites: latent " + std::to_string(k + 1) + " of row " + std::to_string(i) + " is " +
                              std::to_string(v) + ", expected cardinalities (3, 6, 40, 32, 32)");
      }
      f.values[i * 5 + k] = static_cast<int>(v);
    }
  }
  ds.factors = std::move(f);
  return ds;
}

void save_dsprites_npz(const Dataset& ds, const std::filesystem::path& path) {
  if (!ds.factors || ds.factors->cardinalities != kSpriteCardinalities) {
    throw ContractError("save_dsprites_npz: dataset needs sprite factors");
  }
  npz::Array imgs;
  imgs.descr = "|u1";
  imgs.shape = {ds.n, ds.height, ds.width};
  imgs.data.resize(ds.pixels.size());
  for (std::size_t i = 0; i < ds.pixels.size(); ++i) imgs.data[i] = ds.pixels[i] * ds.pixel_scale >= 0.5 ? 1 : 0;

  npz::Array cls;
  cls.descr = "<i8";
  cls.shape = {ds.n, 6};
  cls.data.assign(ds.n * 6 * 8, 0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t k = 0; k < 5; ++k) {
      const std::int64_t v = ds.factors->at(i, k);
      std::memcpy(cls.data.data() + (i * 6 + k + 1) * 8, &v, 8);
    }
  }
  npz::write_npz({{"imgs", std::move(imgs)}, {"latents_classes", std::move(cls)}}, path);
}

}  // namespace gcvae::data
