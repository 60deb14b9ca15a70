#include <cmath>
#include <numbers>
#include <random>

#include "gcvae/dataset.hpp"
#include "gcvae/errors.hpp"

namespace gcvae::data {
namespace {

constexpr std::size_t kSide = 64;
constexpr double kBaseRadius = 8.0;
constexpr double kMargin = 11.0;

enum Shape { square = 0, ellipse = 1, triangle = 2 };

bool inside(int shape, double u, double v) {
  switch (shape) {
    case square:
      return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case ellipse:
      return u * u + (v / 0.6) * (v / 0.6) <= 1.0;
    default: {
      const double r3 = std::numbers::sqrt3;
      return v >= -0.5 && r3 * u + v <= 1.0 && -r3 * u + v <= 1.0;
    }
  }
}

void render(const int* f, std::uint8_t* out) {
  const int shape = f[0];
  const double scale = 0.5 + 0.1 * f[1];
  const double theta = 2.0 * std::numbers::pi * f[2] / 40.0;
  const double travel = static_cast<double>(kSide) - 2.0 * kMargin;
  const double cx = kMargin + travel * f[3] / 31.0;
  const double cy = kMargin + travel * f[4] / 31.0;
  const double radius = kBaseRadius * scale;
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t y = 0; y < kSide; ++y) {
    for (std::size_t x = 0; x < kSide; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double u = (c * dx + s * dy) / radius;
      const double v = (-s * dx + c * dy) / radius;
      out[y * kSide + x] = inside(shape, u, v) ? 1 : 0;
    }
  }
}

}  // namespace

metrics::FactorTable synth_sprite_factors(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("synth_sprites: n must be positive");
  metrics::FactorTable f;
  f.n = n;
  f.cardinalities = kSpriteCardinalities;
  f.values.resize(n * f.cardinalities.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < f.cardinalities.size(); ++k) {
      std::uniform_int_distribution<int> pick(0, f.cardinalities[k] - 1);
      f.values[i * f.cardinalities.size() + k] = pick(rng);
    }
  }
  return f;
}

Dataset render_sprites(const metrics::FactorTable& factors) {
  if (factors.cardinalities != kSpriteCardinalities) throw ContractError("render_sprites: expects sprite factors");
  factors.validate();
  Dataset ds;
  ds.name = "synth";
  ds.n = factors.n;
  ds.height = kSide;
  ds.width = kSide;
  ds.pixel_scale = 1.0;
  ds.pixels.resize(ds.n * kSide * kSide);
  for (std::size_t i = 0; i < ds.n; ++i) render(factors.values.data() + i * 5, ds.pixels.data() + i * kSide * kSide);
  ds.factors = factors;
  return ds;
}

Dataset synth_sprites(std::size_t n, std::uint64_t seed) { return render_sprites(synth_sprite_factors(n, seed)); }

}  // namespace gcvae::data
