#include <doctest.h>

#include <cmath>

#include "gcvae/divergences.hpp"
#include "gcvae/errors.hpp"
#include "gcvae/model.hpp"
#include "support.hpp"

using namespace gcvae;
using namespace gcvae::divergences;

namespace {

double kernel_double_loop(const Tensor& a, const Tensor& b, double sigma) {
  double acc = 0.0;
  const std::size_t k = a.dim(1);
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(0); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < k; ++c) d2 += std::pow(a.at(i, c) - b.at(j, c), 2);
      acc += std::exp(-d2 / (2.0 * sigma * sigma));
    }
  return acc / static_cast<double>(a.dim(0) * b.dim(0));
}

Tensor shifted(Tensor t, double by) {
  for (double& v : t.data()) v += by;
  return t;
}

}  // namespace

TEST_SUITE("divergences") {
  TEST_CASE("gaussian kernel examples") {
    CHECK(gaussian_kernel_mean(Tensor::from({1, 2}, {0, 0}), Tensor::from({1, 2}, {1, 1}), 1.0) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(gaussian_kernel_mean(Tensor::from({1, 2}, {0, 0}), Tensor::from({1, 2}, {0, 0}), 1.0) == 1.0);
  }

  TEST_CASE("kernel mean agrees with a double loop") {
    const Tensor a = testing::normal({17, 5}, 1), b = testing::normal({11, 5}, 2, 1.5);
    for (double sigma : {0.5, std::sqrt(5.0), 4.0}) {
      CHECK(gaussian_kernel_mean(a, b, sigma) == doctest::Approx(kernel_double_loop(a, b, sigma)).epsilon(1e-12));
    }
    const double oracle = kernel_double_loop(a, a, 2.0) - 2 * kernel_double_loop(b, a, 2.0) + kernel_double_loop(b, b, 2.0);
    CHECK(mmd_squared(b, a, 2.0) == doctest::Approx(oracle).epsilon(1e-12));
  }

  TEST_CASE("mmd is near zero between two prior samples") {
    const double sigma = std::sqrt(10.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double m = mmd_squared(standard_normal({256, 10}, 2 * seed), standard_normal({256, 10}, 2 * seed + 1), sigma);
      CHECK(m >= 0.0);
      CHECK(m < 0.05);
    }
  }

  TEST_CASE("identical samples give exactly zero") {
    const Tensor z = testing::normal({32, 4}, 3);
    CHECK(mmd_squared(z, z, 2.0) == 0.0);
    const auto cov = diag_covariance(z, 1e-6);
    CHECK(mahalanobis_squared(z, z, cov) == 0.0);
    CHECK(scaled_mmd(z, z, 2.0, cov) == 0.0);
  }

  TEST_CASE("diagonal covariance examples") {
    const Tensor z = Tensor::from({3, 2}, {1, 5, 2, 5, 3, 5});
    const auto cov = diag_covariance(z, 1e-6);
    CHECK(cov.var[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cov.var[1] == 0.0);
    CHECK(cov.inv[0] == doctest::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-15));
    CHECK(cov.inv[1] == doctest::Approx(1e6).epsilon(1e-12));
    CHECK_THROWS_AS(diag_covariance(Tensor::from({1, 2}, {1, 2}), 1e-6), ContractError);
    CHECK_THROWS_AS(diag_covariance(z, 0.0), ContractError);
  }

  TEST_CASE("mahalanobis example") {
    const Tensor zq = Tensor::from({2, 2}, {2, 0, 4, 0});  // mean (3, 0)
    const Tensor zp = Tensor::from({2, 2}, {-1, 1, 1, -1});  // mean (0, 0)
    DiagCovariance unit{Tensor::ones({2}), Tensor::ones({2})};
    CHECK(mahalanobis_squared(zq, zp, unit) == 9.0);
    DiagCovariance scaled{Tensor::ones({2}), Tensor::from({2}, {0.5, 7})};
    CHECK(mahalanobis_squared(zq, zp, scaled) == 4.5);
  }

  TEST_CASE("scaled mmd with unit inverse variance equals mmd") {
    const Tensor a = testing::normal({20, 3}, 4), b = testing::normal({20, 3}, 5);
    DiagCovariance unit{Tensor::ones({3}), Tensor::ones({3})};
    CHECK(scaled_mmd(a, b, 1.7, unit) == mmd_squared(a, b, 1.7));
  }

  TEST_CASE("symmetry") {
    const Tensor a = testing::normal({15, 3}, 6), b = testing::normal({15, 3}, 7, 2.0);
    CHECK(mmd_squared(a, b, 1.5) == doctest::Approx(mmd_squared(b, a, 1.5)).epsilon(1e-13));
    DiagCovariance c{Tensor::ones({3}), Tensor::from({3}, {0.2, 1, 3})};
    CHECK(mahalanobis_squared(a, b, c) == doctest::Approx(mahalanobis_squared(b, a, c)).epsilon(1e-13));
  }

  TEST_CASE("divergences grow as the sample sets separate") {
    const Tensor p = testing::normal({64, 4}, 8);
    const Tensor q0 = testing::normal({64, 4}, 9);
    const double sigma = 2.0;
    double last_mmd = -1.0, last_mah = -1.0;
    for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const Tensor q = shifted(q0, shift);
      Params mp{Kind::mmd, sigma};
      Params hp{Kind::mahalanobis, sigma};
      Tape tape;
      const double m = divergence(mp, tape.constant(q), tape.constant(p)).value().item();
      const double h = divergence(hp, tape.constant(q), tape.constant(p)).value().item();
      CHECK(m > last_mmd);
      CHECK(h > last_mah);
      last_mmd = m;
      last_mah = h;
    }
  }

  TEST_CASE("non-negative over random instances") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const std::size_t k = 1 + seed % 6;
      const Tensor q = testing::normal({8 + seed % 9, k}, 1000 + seed, 0.5 + (seed % 4));
      const Tensor p = testing::normal({8 + seed % 5, k}, 5000 + seed);
      for (Kind kind : {Kind::mmd, Kind::mahalanobis, Kind::scaled_mmd}) {
        Tape tape;
        CHECK(divergence(Params{kind}, tape.constant(q), tape.constant(p)).value().item() >= -1e-12);
      }
    }
  }

  TEST_CASE("bandwidth resolution") {
    CHECK(resolve_bandwidth(Params{}, 10) == std::sqrt(10.0));
    CHECK(resolve_bandwidth(Params{Kind::mmd, 0.7}, 10) == 0.7);
    const Tensor a = Tensor::from({2, 1}, {0, 1}), b = Tensor::from({1, 1}, {3});
    CHECK(median_heuristic_bandwidth(a, b) == 2.0);  // distances 1, 3, 2
  }

  TEST_CASE("shape errors") {
    Tape tape;
    Var a = tape.constant(Tensor::zeros({4, 3}));
    Var b = tape.constant(Tensor::zeros({4, 2}));
    CHECK_THROWS_AS(mmd_squared(a, b, 1.0), ShapeError);
    CHECK_THROWS_AS(mahalanobis_squared(a, a, tape.constant(Tensor::ones({2}))), ShapeError);
    CHECK_THROWS_AS(gaussian_kernel_mean(a, a, 0.0), ContractError);
    CHECK_THROWS_AS(parse_kind("wasserstein"), ContractError);
  }

  TEST_CASE("finite differences in the encoder samples") {
    const Tensor p = testing::normal({6, 3}, 10);
    for (Kind kind : {Kind::mmd, Kind::mahalanobis, Kind::scaled_mmd}) {
      CAPTURE(to_string(kind));
      const auto f = [&](Var zq) { return divergence(Params{kind, 1.3}, zq, zq.tape().constant(p)); };
      CHECK(testing::gradient_error(f, testing::normal({5, 3}, 11, 1.5)) < 1e-4);
    }
  }
}
