#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "gcvae/gradcheck.hpp"
#include "gcvae/ops.hpp"
#include "gcvae/tape.hpp"

namespace testing {

inline gcvae::Tensor uniform(const gcvae::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  gcvae::Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline gcvae::Tensor normal(const gcvae::Shape& shape, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  gcvae::Tensor t(shape);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Values bounded away from zero, for ops with a kink or pole there.
inline gcvae::Tensor away_from_zero(const gcvae::Shape& shape, std::uint64_t seed, double lo = 0.2, double hi = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  gcvae::Tensor t(shape);
  for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

using Graph = std::function<gcvae::Var(gcvae::Var)>;

// Reduces an op output to a scalar through fixed random weights so every output element
// contributes a distinct, O(1) share of the gradient.
inline gcvae::Var weighted_sum(gcvae::Var y, std::uint64_t seed = 99) {
  auto r = y.tape().constant(uniform(y.shape(), seed, 0.5, 1.5));
  return gcvae::ops::reduce_sum(gcvae::ops::mul(y, r));
}

// Max relative error between the tape gradient of build(x) and central differences.
inline double gradient_error(const Graph& build, const gcvae::Tensor& x0, double h = 1e-5) {
  gcvae::Tape tape;
  gcvae::Var x = tape.parameter(x0);
  const gcvae::Var loss = build(x);
  const auto grads = tape.backward(loss);
  const gcvae::Tensor analytic = grads.count(x.id()) ? grads.at(x.id()) : gcvae::Tensor(x0.shape());
  const auto f = [&](const gcvae::Tensor& xt) {
    gcvae::Tape t;
    return build(t.parameter(xt)).value().item();
  };
  return gcvae::max_relative_error(analytic, gcvae::finite_diff_gradient(f, x0, h));
}

}  // namespace testing
