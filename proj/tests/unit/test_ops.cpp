#include <doctest.h>

#include <cmath>

#include "gcvae/errors.hpp"
#include "support.hpp"

using namespace gcvae;
using testing::gradient_error;
using testing::uniform;
using testing::weighted_sum;

namespace {

constexpr double kTol = 1e-4;

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor c({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
      c.at(i, j) = s;
    }
  return c;
}

// Direct seven-loop convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t s, std::size_t p) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t Ho = (H + 2 * p - kh) / s + 1, Wo = (W + 2 * p - kw) / s + 1;
  Tensor y({N, O, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t b = 0; b < kw; ++b) {
                const long r = static_cast<long>(i * s + a) - static_cast<long>(p);
                const long q = static_cast<long>(j * s + b) - static_cast<long>(p);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += x[((n * C + c) * H + r) * W + q] * w[((o * C + c) * kh + a) * kw + b];
              }
          y[((n * O + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("tensor-engine") {
  TEST_CASE("tensor construction and shape checks") {
    const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 6.0);
    CHECK(t.reshaped({3, 2}).at(2, 1) == 6.0);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK_THROWS(t.item());
  }

  TEST_CASE("backward accumulates over shared subexpressions") {
    Tape tape;
    Var x = tape.parameter(Tensor::scalar(3.0));
    Var y = ops::add(ops::mul(x, x), x);  // x^2 + x
    const auto g = tape.backward(y);
    CHECK(g.at(x.id()).item() == 7.0);
  }

  TEST_CASE("constants and unrelated parameters receive no gradient") {
    Tape tape;
    Var a = tape.parameter(Tensor::scalar(2.0));
    Var unused = tape.parameter(Tensor::scalar(5.0));
    Var c = tape.constant(Tensor::scalar(4.0));
    const auto g = tape.backward(ops::mul(a, c));
    CHECK(g.at(a.id()).item() == 4.0);
    CHECK(g.count(c.id()) == 0);
    CHECK(g.count(unused.id()) == 0);
  }

  TEST_CASE("backward requires a scalar loss") {
    Tape tape;
    Var a = tape.parameter(Tensor::ones({2}));
    CHECK_THROWS_AS(tape.backward(a), ContractError);
  }

  TEST_CASE("conv2d output shape for a 64x64 input") {
    Tape tape;
    Var x = tape.constant(Tensor::zeros({1, 1, 64, 64}));
    Var w = tape.constant(Tensor::zeros({32, 1, 4, 4}));
    CHECK(ops::conv2d(x, w, 2, 1).shape() == Shape{1, 32, 32, 32});
    CHECK_THROWS_AS(ops::conv2d(x, tape.constant(Tensor::zeros({32, 2, 4, 4})), 2, 1), ShapeError);
  }

  TEST_CASE("relu on a small vector") {
    Tape tape;
    Var x = tape.constant(Tensor::from({3}, {-1, 0, 2}));
    CHECK(ops::relu(x).value() == Tensor::from({3}, {0, 0, 2}));
  }

  TEST_CASE("matmul agrees with a triple loop") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Tensor a = uniform({7 + seed, 13}, seed), b = uniform({13, 5 + 2 * seed}, seed + 100);
      Tape tape;
      const Tensor c = ops::matmul(tape.constant(a), tape.constant(b)).value();
      CHECK(max_relative_error(c, naive_matmul(a, b), 1.0) < 1e-12);
    }
    Tape tape;
    CHECK_THROWS_AS(ops::matmul(tape.constant(Tensor::zeros({2, 3})), tape.constant(Tensor::zeros({2, 3}))),
                    ShapeError);
  }

  TEST_CASE("conv2d agrees with direct loops") {
    const Tensor x = uniform({2, 3, 9, 8}, 1), w = uniform({4, 3, 3, 3}, 2);
    for (auto [s, p] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
      Tape tape;
      const Tensor y = ops::conv2d(tape.constant(x), tape.constant(w), s, p).value();
      CHECK(max_relative_error(y, naive_conv(x, w, s, p), 1.0) < 1e-12);
    }
  }

  TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
    // <conv(x, w), y> == <x, convT(y, w)> for the same weight tensor
    const Tensor x = uniform({2, 3, 8, 8}, 3), w = uniform({5, 3, 4, 4}, 4);
    Tape tape;
    const Tensor cx = ops::conv2d(tape.constant(x), tape.constant(w), 2, 1).value();
    const Tensor y = uniform(cx.shape(), 5);
    const Tensor ty = ops::conv_transpose2d(tape.constant(y), tape.constant(w), 2, 1).value();
    REQUIRE(ty.shape() == x.shape());
    CHECK(std::abs(dot(cx, y) - dot(x, ty)) < 1e-10);
  }

  TEST_CASE("reduce_mean times numel equals reduce_sum") {
    const Tensor x = uniform({4, 5, 3}, 6);
    Tape tape;
    Var v = tape.constant(x);
    CHECK(ops::reduce_mean(v).value().item() * 60.0 == doctest::Approx(ops::reduce_sum(v).value().item()).epsilon(1e-14));
  }

  TEST_CASE("maxpool routes the gradient to the first maximum on ties") {
    Tape tape;
    Var x = tape.parameter(Tensor::from({1, 1, 2, 2}, {1, 3, 3, 0}));
    const auto g = tape.backward(ops::reduce_sum(ops::maxpool2d(x)));
    CHECK(g.at(x.id()) == Tensor::from({1, 1, 2, 2}, {0, 1, 0, 0}));
  }

  TEST_CASE("batchnorm standardizes each channel in training mode") {
    const Tensor x = uniform({6, 2, 3, 3}, 7, -3.0, 5.0);
    Tape tape;
    ops::BatchNormStats stats{Tensor::zeros({2}), Tensor::ones({2})};
    const Tensor y = ops::batchnorm2d(tape.constant(x), tape.constant(Tensor::ones({2})),
                                      tape.constant(Tensor::zeros({2})), &stats, true, 0.9, 0.0)
                         .value();
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t n = 0; n < 6; ++n)
        for (std::size_t i = 0; i < 9; ++i) m += y[(n * 2 + c) * 9 + i];
      m /= 54.0;
      for (std::size_t n = 0; n < 6; ++n)
        for (std::size_t i = 0; i < 9; ++i) v += std::pow(y[(n * 2 + c) * 9 + i] - m, 2);
      CHECK(std::abs(m) < 1e-12);
      CHECK(v / 54.0 == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(stats.running_mean[0] != 0.0);
  }

  TEST_CASE("domain errors") {
    Tape tape;
    CHECK_THROWS_AS(ops::log(tape.constant(Tensor::from({2}, {1, 0}))), DomainError);
    CHECK_THROWS_AS(ops::div(tape.constant(Tensor::ones({2})), tape.constant(Tensor::zeros({2}))), DomainError);
    CHECK_THROWS_AS(ops::bce_with_logits(tape.constant(Tensor::ones({2})), tape.constant(Tensor::from({2}, {0, 1.5}))),
                    DomainError);
  }
}

TEST_SUITE("tensor-engine") {
  TEST_CASE("finite differences: elementwise primitives") {
    const Tensor x = testing::away_from_zero({3, 4}, 11);
    const Tensor pos = uniform({3, 4}, 12, 0.3, 2.0);
    const Tensor other = testing::away_from_zero({3, 4}, 13);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::relu(v)); }, x) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::sigmoid(v)); }, x) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::exp(v)); }, x) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::log(v)); }, pos) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::square(v)); }, x) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::scalar_mul(v, -2.5)); }, x) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::add_scalar(v, 0.7)); }, x) < kTol);
    for (int side = 0; side < 2; ++side) {
      const auto bin = [&](auto op) {
        return gradient_error(
            [&](Var v) {
              Var o = v.tape().constant(other);
              return weighted_sum(side == 0 ? op(v, o) : op(o, v));
            },
            x);
      };
      CAPTURE(side);
      CHECK(bin([](Var a, Var b) { return ops::add(a, b); }) < kTol);
      CHECK(bin([](Var a, Var b) { return ops::sub(a, b); }) < kTol);
      CHECK(bin([](Var a, Var b) { return ops::mul(a, b); }) < kTol);
      CHECK(bin([](Var a, Var b) { return ops::div(a, b); }) < kTol);
    }
    // rank-0 broadcast in both operand positions
    CHECK(gradient_error([&](Var s) { return weighted_sum(ops::mul(s, s.tape().constant(other))); },
                         Tensor::scalar(0.8)) < kTol);
    CHECK(gradient_error([&](Var v) { return weighted_sum(ops::div(v, v.tape().constant(Tensor::scalar(1.7)))); },
                         x) < kTol);
  }

  TEST_CASE("finite differences: bce_with_logits in the logits") {
    const Tensor t = uniform({4, 5}, 21, 0.0, 1.0);
    CHECK(gradient_error([&](Var z) { return weighted_sum(ops::bce_with_logits(z, z.tape().constant(t))); },
                         uniform({4, 5}, 22, -4.0, 4.0)) < kTol);
  }

  TEST_CASE("finite differences: linear algebra and layout") {
    const Tensor b = uniform({5, 3}, 31);
    CHECK(gradient_error([&](Var a) { return weighted_sum(ops::matmul(a, a.tape().constant(b))); },
                         uniform({4, 5}, 32)) < kTol);
    CHECK(gradient_error([&](Var w) { return weighted_sum(ops::matmul(w.tape().constant(uniform({4, 5}, 33)), w)); },
                         b) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::bias_add(v.tape().constant(uniform({4, 3}, 34)), v)); },
                         uniform({3}, 35)) < kTol);
    CHECK(gradient_error(
              [](Var v) { return weighted_sum(ops::bias_add(v.tape().constant(uniform({2, 3, 2, 2}, 36)), v)); },
              uniform({3}, 37)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::bias_add(v, v.tape().constant(uniform({3}, 38)))); },
                         uniform({2, 3, 2, 2}, 39)) < kTol);
    CHECK(gradient_error([](Var v) { return ops::reduce_sum(ops::square(v)); }, uniform({3, 4}, 40)) < kTol);
    CHECK(gradient_error([](Var v) { return ops::reduce_mean(ops::square(v)); }, uniform({3, 4}, 41)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::reshape(v, {2, 6})); }, uniform({3, 4}, 42)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::slice_cols(v, 1, 3)); }, uniform({3, 4}, 43)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::concat_rows(v, ops::square(v))); },
                         uniform({3, 4}, 44)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::pairwise_sqdist(v, v.tape().constant(uniform({5, 4}, 45)))); },
                         uniform({3, 4}, 46)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::pairwise_sqdist(v.tape().constant(uniform({5, 4}, 47)), v)); },
                         uniform({3, 4}, 48)) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::pairwise_sqdist(v, v)); }, uniform({3, 4}, 49)) < kTol);
  }

  TEST_CASE("finite differences: convolution, pooling, upsampling, batchnorm") {
    const Tensor x = uniform({2, 2, 6, 6}, 51);
    const Tensor w = uniform({3, 2, 4, 4}, 52);
    CHECK(gradient_error([&](Var v) { return weighted_sum(ops::conv2d(v, v.tape().constant(w), 2, 1)); }, x) < kTol);
    CHECK(gradient_error([&](Var v) { return weighted_sum(ops::conv2d(v.tape().constant(x), v, 2, 1)); }, w) < kTol);
    CHECK(gradient_error([&](Var v) { return weighted_sum(ops::conv2d(v, v.tape().constant(uniform({3, 2, 3, 3}, 53)), 1, 1)); },
                         x) < kTol);
    const Tensor wt = uniform({2, 3, 4, 4}, 54);
    const Tensor xt = uniform({2, 2, 3, 3}, 55);
    CHECK(gradient_error([&](Var v) { return weighted_sum(ops::conv_transpose2d(v, v.tape().constant(wt), 2, 1)); },
                         xt) < kTol);
    CHECK(gradient_error([&](Var v) { return weighted_sum(ops::conv_transpose2d(v.tape().constant(xt), v, 2, 1)); },
                         wt) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::maxpool2d(v)); }, x) < kTol);
    CHECK(gradient_error([](Var v) { return weighted_sum(ops::upsample2x(v)); }, x) < kTol);

    const Tensor gamma = uniform({2}, 56, 0.5, 1.5), beta = uniform({2}, 57);
    const auto bn = [](Var v, Var g, Var b) { return weighted_sum(ops::batchnorm2d(v, g, b, nullptr, true)); };
    CHECK(gradient_error([&](Var v) { return bn(v, v.tape().constant(gamma), v.tape().constant(beta)); }, x) < kTol);
    CHECK(gradient_error([&](Var g) { return bn(g.tape().constant(x), g, g.tape().constant(beta)); }, gamma) < kTol);
    CHECK(gradient_error([&](Var b) { return bn(b.tape().constant(x), b.tape().constant(gamma), b); }, beta) < kTol);
  }
}
