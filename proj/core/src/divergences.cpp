#include "gcvae/divergences.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gcvae/errors.hpp"
#include "gcvae/ops.hpp"

namespace gcvae::divergences {
namespace {

void require_matrix(Var z, const char* op) {
  if (z.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": samples must be a rank-2 [n,k] tensor, got " + shape_str(z.shape()));
  }
}

void require_same_dim(Var a, Var b, const char* op) {
  require_matrix(a, op);
  require_matrix(b, op);
  if (a.shape()[1] != b.shape()[1]) {
    throw ShapeError(std::string(op) + ": latent dimensions differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// [1,k] column means.
Var mean_rows(Var z) {
  const std::size_t n = z.shape()[0];
  Var ones = z.tape().constant(Tensor({1, n}, 1.0));
  return ops::scalar_mul(ops::matmul(ones, z), 1.0 / static_cast<double>(n));
}

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::mmd: return "mmd";
    case Kind::mahalanobis: return "mahalanobis";
    case Kind::scaled_mmd: return "scaled_mmd";
  }
  return "unknown";
}

Kind parse_kind(const std::string& name) {
  if (name == "mmd") return Kind::mmd;
  if (name == "mahalanobis") return Kind::mahalanobis;
  if (name == "scaled_mmd") return Kind::scaled_mmd;
  throw ContractError("unknown divergence '" + name + "'");
}

Var gaussian_kernel_mean(Var a, Var b, double sigma) {
  require_same_dim(a, b, "gaussian_kernel_mean");
  if (a.shape()[0] == 0 || b.shape()[0] == 0) throw ContractError("gaussian_kernel_mean: empty sample set");
  if (!(sigma > 0.0)) throw ContractError("gaussian_kernel_mean: bandwidth must be positive");
  Var d2 = ops::pairwise_sqdist(a, b);
  return ops::reduce_mean(ops::exp(ops::scalar_mul(d2, -1.0 / (2.0 * sigma * sigma))));
}

Var mmd_squared(Var zq, Var zp, double sigma) {
  require_same_dim(zq, zp, "mmd_squared");
  if (zq.shape()[0] < 2 || zp.shape()[0] < 2) throw ContractError("mmd_squared: needs at least 2 samples per side");
  Var kpp = gaussian_kernel_mean(zp, zp, sigma);
  Var kqp = gaussian_kernel_mean(zq, zp, sigma);
  Var kqq = gaussian_kernel_mean(zq, zq, sigma);
  return ops::add(ops::sub(kpp, ops::scalar_mul(kqp, 2.0)), kqq);
}

DiagCovarianceVars diag_covariance(Var z, double eps_reg) {
  require_matrix(z, "diag_covariance");
  const std::size_t n = z.shape()[0], k = z.shape()[1];
  if (n < 2) throw ContractError("diag_covariance: needs at least 2 samples");
  if (!(eps_reg > 0.0)) throw ContractError("diag_covariance: regularizer must be positive");
  Tape& tape = z.tape();
  Var centered = ops::sub(z, ops::matmul(tape.constant(Tensor({n, 1}, 1.0)), mean_rows(z)));
  Var sum_sq = ops::matmul(tape.constant(Tensor({1, n}, 1.0)), ops::square(centered));
  Var var = ops::reshape(ops::scalar_mul(sum_sq, 1.0 / static_cast<double>(n - 1)), {k});
  Var inv = ops::div(tape.constant(Tensor({k}, 1.0)), ops::add_scalar(var, eps_reg));
  return {var, inv};
}

Var mahalanobis_squared(Var zq, Var zp, Var inv) {
  require_same_dim(zq, zp, "mahalanobis_squared");
  const std::size_t k = zq.shape()[1];
  if (inv.value().numel() != k) {
    throw ShapeError("mahalanobis_squared: inverse variance has " + std::to_string(inv.value().numel()) +
                     " entries for latent dimension " + std::to_string(k));
  }
  if (zq.shape()[0] == 0 || zp.shape()[0] == 0) throw ContractError("mahalanobis_squared: empty sample set");
  Var delta = ops::sub(mean_rows(zq), mean_rows(zp));
  return ops::reduce_sum(ops::mul(ops::square(delta), ops::reshape(inv, {1, k})));
}

Var scaled_mmd(Var zq, Var zp, double sigma, Var inv) {
  if (inv.value().numel() != zq.shape().at(1)) {
    throw ShapeError("scaled_mmd: inverse variance size does not match latent dimension");
  }
  return ops::mul(mmd_squared(zq, zp, sigma), ops::reduce_mean(inv));
}

double resolve_bandwidth(const Params& params, std::size_t latent_dim) {
  return params.kernel_bandwidth > 0.0 ? params.kernel_bandwidth : std::sqrt(static_cast<double>(latent_dim));
}

Var divergence(const Params& params, Var zq, Var zp) {
  require_same_dim(zq, zp, "divergence");
  const double sigma = params.median_bandwidth ? median_heuristic_bandwidth(zq.value(), zp.value())
                                               : resolve_bandwidth(params, zq.shape()[1]);
  switch (params.kind) {
    case Kind::mmd: return mmd_squared(zq, zp, sigma);
    case Kind::mahalanobis: {
      auto cov = diag_covariance(ops::concat_rows(zq, zp), params.cov_regularizer);
      return mahalanobis_squared(zq, zp, cov.inv);
    }
    case Kind::scaled_mmd: {
      auto cov = diag_covariance(ops::concat_rows(zq, zp), params.cov_regularizer);
      return scaled_mmd(zq, zp, sigma, cov.inv);
    }
  }
  throw ContractError("divergence: unknown kind");
}

double gaussian_kernel_mean(const Tensor& a, const Tensor& b, double sigma) {
  Tape tape;
  return gaussian_kernel_mean(tape.constant(a), tape.constant(b), sigma).value().item();
}

double mmd_squared(const Tensor& zq, const Tensor& zp, double sigma) {
  Tape tape;
  return mmd_squared(tape.constant(zq), tape.constant(zp), sigma).value().item();
}

DiagCovariance diag_covariance(const Tensor& z, double eps_reg) {
  Tape tape;
  auto vars = diag_covariance(tape.constant(z), eps_reg);
  return {vars.var.value(), vars.inv.value()};
}

double mahalanobis_squared(const Tensor& zq, const Tensor& zp, const DiagCovariance& cov) {
  Tape tape;
  return mahalanobis_squared(tape.constant(zq), tape.constant(zp), tape.constant(cov.inv)).value().item();
}

double scaled_mmd(const Tensor& zq, const Tensor& zp, double sigma, const DiagCovariance& cov) {
  Tape tape;
  return scaled_mmd(tape.constant(zq), tape.constant(zp), sigma, tape.constant(cov.inv)).value().item();
}

double median_heuristic_bandwidth(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("median_heuristic_bandwidth: incompatible sample sets");
  }
  const std::size_t k = a.dim(1);
  std::vector<const double*> rows;
  for (std::size_t i = 0; i < a.dim(0); ++i) rows.push_back(a.ptr() + i * k);
  for (std::size_t i = 0; i < b.dim(0); ++i) rows.push_back(b.ptr() + i * k);
  if (rows.size() < 2) throw ContractError("median_heuristic_bandwidth: needs at least 2 samples");
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = rows[i][c] - rows[j][c];
        s += d * d;
      }
      dists.push_back(std::sqrt(s));
    }
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

}  // namespace gcvae::divergences
