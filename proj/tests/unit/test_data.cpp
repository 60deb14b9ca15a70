#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "gcvae/dataset.hpp"
#include "gcvae/errors.hpp"
#include "gcvae/npz.hpp"

using namespace gcvae;
using namespace gcvae::data;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = GCVAE_TEST_DATA_DIR;

void put_u32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, const std::vector<std::uint8_t>& px) {
  std::string s;
  put_u32(s, 0x00000803);
  put_u32(s, n);
  put_u32(s, rows);
  put_u32(s, cols);
  s.append(px.begin(), px.end());
  return s;
}

std::string idx_labels(const std::vector<std::uint8_t>& labels) {
  std::string s;
  put_u32(s, 0x00000801);
  put_u32(s, static_cast<std::uint32_t>(labels.size()));
  s.append(labels.begin(), labels.end());
  return s;
}

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& tag) : path(fs::temp_directory_path() / ("gcvae_unit_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("data-io") {
  TEST_CASE("IDX images scale bytes to [0,1]") {
    std::vector<std::uint8_t> px(2 * 2 * 3);
    std::iota(px.begin(), px.end(), 0);
    px[5] = 255;
    const Dataset ds = parse_mnist_idx(idx_images(2, 2, 3, px), idx_labels({7, 1}));
    CHECK(ds.n == 2);
    CHECK(ds.height == 2);
    CHECK(ds.width == 3);
    CHECK(ds.pixel(0, 1, 2) == 1.0);
    CHECK(ds.pixel(1, 0, 1) == 7.0 / 255.0);
    REQUIRE(ds.factors.has_value());
    CHECK(ds.factors->cardinalities == std::vector<int>{10});
    CHECK(ds.factors->values == std::vector<int>{7, 1});
    const std::size_t rows[] = {1};
    const Tensor t = ds.images(rows);
    CHECK(t.shape() == Shape{1, 1, 2, 3});
    CHECK(t[0] == 6.0 / 255.0);
  }

  TEST_CASE("IDX error cases") {
    const std::vector<std::uint8_t> px(8, 0);
    CHECK_THROWS_AS(parse_mnist_idx(idx_images(2, 2, 2, px), idx_labels({1, 2, 3})), LengthError);
    CHECK_THROWS_AS(parse_mnist_idx(idx_images(3, 2, 2, px), idx_labels({1, 2, 3})), LengthError);
    std::string bad = idx_images(2, 2, 2, px);
    bad[3] = 0x01;
    CHECK_THROWS_AS(parse_mnist_idx(bad, idx_labels({1, 2})), FormatError);
    CHECK_THROWS_AS(parse_mnist_idx("", idx_labels({})), LengthError);
    CHECK_THROWS_AS(parse_mnist_idx(idx_images(2, 2, 2, px), idx_labels({1, 12})), ValidationError);
    CHECK_THROWS_AS(load_mnist_idx("/nonexistent/a", "/nonexistent/b"), IoError);
  }

  TEST_CASE("npy round trip") {
    npz::Array a;
    a.descr = "<i8";
    a.shape = {2, 3};
    a.data.resize(48);
    std::iota(a.data.begin(), a.data.end(), 1);
    const auto bytes = encode_npy(a);
    CHECK(((bytes.size() - 48) % 64) == 0);  // header padded to a 64-byte boundary
    const npz::Array b = npz::parse_npy(bytes);
    CHECK(b.descr == a.descr);
    CHECK(b.shape == a.shape);
    CHECK(b.data == a.data);
    CHECK(b.item_size() == 8);
    CHECK(b.numel() == 6);
  }

  TEST_CASE("npz round trip and member filtering") {
    npz::Archive ar;
    ar["x"] = npz::Array{"|u1", {4}, false, {1, 2, 3, 4}};
    ar["y"] = npz::Array{"<f8", {1}, false, std::vector<std::uint8_t>(8, 0)};
    const std::string bytes = npz::encode_npz(ar);
    const npz::Archive back = npz::parse_npz(bytes);
    REQUIRE(back.size() == 2);
    CHECK(back.at("x").data == ar["x"].data);
    CHECK(back.at("y").descr == "<f8");
    const npz::Archive only = npz::parse_npz(bytes, std::set<std::string>{"y"});
    CHECK(only.size() == 1);
    CHECK(only.count("y") == 1);
  }

  TEST_CASE("npz corruption is detected") {
    npz::Archive ar;
    ar["x"] = npz::Array{"|u1", {4}, false, {1, 2, 3, 4}};
    std::string bytes = npz::encode_npz(ar);
    CHECK_THROWS_AS(npz::parse_npz(bytes.substr(0, bytes.size() - 30)), FormatError);
    const auto at = bytes.find(std::string("\x01\x02\x03\x04", 4));
    REQUIRE(at != std::string::npos);
    bytes[at] = 9;
    CHECK_THROWS(npz::parse_npz(bytes));
    CHECK_THROWS_AS(npz::parse_npz("too short"), LengthError);
    CHECK_THROWS_AS(npz::parse_npz(std::string(100, 'x')), FormatError);
  }

  TEST_CASE("dSprites archives: deflate and zip64 containers") {
    std::ifstream expected(kFixtures / "sprites_expected.txt");
    std::vector<std::vector<int>> rows;
    for (std::string line; std::getline(expected, line);) {
      std::istringstream in(line);
      rows.emplace_back(std::istream_iterator<int>(in), std::istream_iterator<int>());
    }
    REQUIRE(rows.size() == 6);
    for (const char* name : {"sprites_deflate.npz", "sprites_zip64.npz"}) {
      CAPTURE(name);
      const Dataset ds = load_dsprites_npz(kFixtures / name);
      CHECK(ds.n == 6);
      CHECK(ds.height == 64);
      REQUIRE(ds.factors.has_value());
      CHECK(ds.factors->cardinalities == kSpriteCardinalities);
      for (std::size_t i = 0; i < 6; ++i) {
        const auto begin = ds.pixels.begin() + static_cast<std::ptrdiff_t>(i * 4096);
        CHECK(std::accumulate(begin, begin + 4096, 0) == rows[i][0]);
        for (std::size_t k = 0; k < 5; ++k) CHECK(ds.factors->at(i, k) == rows[i][k + 1]);
      }
    }
  }

  TEST_CASE("dSprites archive without latents_classes") {
    CHECK_THROWS_AS(load_dsprites_npz(kFixtures / "sprites_no_classes.npz"), FormatError);
  }

  TEST_CASE("dSprites save and reload") {
    ScratchDir dir("dsprites");
    const Dataset ds = synth_sprites(9, 4);
    save_dsprites_npz(ds, dir.path / "s.npz");
    const Dataset back = load_dsprites_npz(dir.path / "s.npz");
    CHECK(back.pixels == ds.pixels);
    CHECK(back.factors->values == ds.factors->values);
  }

  TEST_CASE("dSprites validation") {
    ScratchDir dir("dsprites_bad");
    const auto archive = [](std::uint8_t pixel, std::int64_t orientation) {
      npz::Array imgs{"|u1", {1, 64, 64}, false, std::vector<std::uint8_t>(4096, 0)};
      imgs.data[7] = pixel;
      npz::Array cls{"<i8", {1, 6}, false, std::vector<std::uint8_t>(48, 0)};
      std::memcpy(cls.data.data() + 3 * 8, &orientation, 8);
      return npz::Archive{{"imgs", imgs}, {"latents_classes", cls}};
    };
    npz::write_npz(archive(1, 39), dir.path / "ok.npz");
    CHECK(load_dsprites_npz(dir.path / "ok.npz").factors->at(0, 2) == 39);
    npz::write_npz(archive(2, 0), dir.path / "bad_px.npz");
    CHECK_THROWS_AS(load_dsprites_npz(dir.path / "bad_px.npz"), ValidationError);
    npz::write_npz(archive(1, 40), dir.path / "bad_latent.npz");
    CHECK_THROWS_AS(load_dsprites_npz(dir.path / "bad_latent.npz"), ValidationError);
  }

  TEST_CASE("synthetic sprites are deterministic, binary and cover their factors") {
    const Dataset a = synth_sprites(50, 11), b = synth_sprites(50, 11), c = synth_sprites(50, 12);
    CHECK(a.pixels == b.pixels);
    CHECK(a.factors->values == b.factors->values);
    CHECK(a.pixels != c.pixels);
    for (std::uint8_t v : a.pixels) REQUIRE(v <= 1);
    for (std::size_t i = 0; i < a.n; ++i) {
      const auto begin = a.pixels.begin() + static_cast<std::ptrdiff_t>(i * 4096);
      CHECK(std::accumulate(begin, begin + 4096, 0) >= 10);
    }

    const metrics::FactorTable f = synth_sprite_factors(30000, 5);
    for (std::size_t k = 0; k < 5; ++k) {
      const int card = kSpriteCardinalities[k];
      std::vector<int> counts(card, 0);
      for (std::size_t i = 0; i < f.n; ++i) ++counts[f.at(i, k)];
      const double p = 1.0 / card, mean = f.n * p, sd = std::sqrt(f.n * p * (1 - p));
      for (int c2 : counts) CHECK(std::abs(c2 - mean) < 4 * sd);
    }
  }

  TEST_CASE("sprite scale grows the rendered area") {
    metrics::FactorTable f;
    f.cardinalities = kSpriteCardinalities;
    f.n = 2;
    f.values = {1, 0, 0, 16, 16, 1, 5, 0, 16, 16};
    const Dataset ds = render_sprites(f);
    const auto area = [&](std::size_t i) {
      const auto begin = ds.pixels.begin() + static_cast<std::ptrdiff_t>(i * 4096);
      return std::accumulate(begin, begin + 4096, 0);
    };
    CHECK(area(1) > 3 * area(0));
    // ellipse of radii 8*0.5 and 0.6 times that
    CHECK(std::abs(area(0) - std::numbers::pi * 4.0 * 2.4) < 10.0);
  }

  TEST_CASE("subsample is a seeded subset") {
    const Dataset ds = synth_sprites(100, 1);
    const Dataset s = subsample(ds, 30, 8);
    CHECK(s.n == 30);
    CHECK(s.pixels == subsample(ds, 30, 8).pixels);
    CHECK(s.pixels != subsample(ds, 30, 9).pixels);
    // each subsampled image appears in the source exactly once, with its own factors
    std::set<std::size_t> used;
    for (std::size_t i = 0; i < s.n; ++i) {
      bool found = false;
      for (std::size_t j = 0; j < ds.n && !found; ++j) {
        if (std::equal(s.pixels.begin() + i * 4096, s.pixels.begin() + (i + 1) * 4096, ds.pixels.begin() + j * 4096) &&
            !used.count(j)) {
          found = true;
          used.insert(j);
          for (std::size_t k = 0; k < 5; ++k) CHECK(s.factors->at(i, k) == ds.factors->at(j, k));
        }
      }
      CHECK(found);
    }
    CHECK_THROWS_AS(subsample(ds, 101, 0), ContractError);
  }

  TEST_CASE("batch stream drops the short batch and reshuffles each epoch") {
    BatchStream s(737, 64, 3);
    CHECK(s.batches_per_epoch() == 11);
    std::vector<std::size_t> first_epoch;
    for (int b = 0; b < 11; ++b) {
      const auto rows = s.next();
      CHECK(rows.size() == 64);
      first_epoch.insert(first_epoch.end(), rows.begin(), rows.end());
    }
    std::set<std::size_t> distinct(first_epoch.begin(), first_epoch.end());
    CHECK(distinct.size() == 704);
    CHECK(*distinct.rbegin() < 737);
    const auto next = s.next();
    CHECK(s.epoch() == 1);
    CHECK(next != std::vector<std::size_t>(first_epoch.begin(), first_epoch.begin() + 64));

    BatchStream t(737, 64, 3);
    CHECK(t.next() == std::vector<std::size_t>(first_epoch.begin(), first_epoch.begin() + 64));
  }
}
