#pragma once

#include <string>

#include "gcvae/tape.hpp"
#include "gcvae/tensor.hpp"

/// Sample-based divergences between an encoder's aggregated posterior (rows of Zq)
/// and prior draws (rows of Zp). Each estimator has a differentiable form that records
/// on a tape and a plain form on tensors; the plain form runs the differentiable one on
/// a scratch tape so both share a single code path.
namespace gcvae::divergences {

enum class Kind { mmd, mahalanobis, scaled_mmd };

std::string to_string(Kind kind);
Kind parse_kind(const std::string& name);

struct Params {
  Kind kind = Kind::mahalanobis;
  double kernel_bandwidth = 0.0;  // <= 0 means sqrt(k)
  bool median_bandwidth = false;  // per-batch median heuristic instead of a fixed bandwidth
  double cov_regularizer = 1e-6;
};

/// Diagonal covariance: var_j and inv_j = 1 / (var_j + eps).
struct DiagCovariance {
  Tensor var;
  Tensor inv;
};

struct DiagCovarianceVars {
  Var var;
  Var inv;
};

// Differentiable forms -------------------------------------------------------------

/// (1/nm) sum_ij exp(-||A_i - B_j||^2 / (2 sigma^2))
Var gaussian_kernel_mean(Var a, Var b, double sigma);

/// Biased (V-statistic) squared MMD: E_pp[k] - 2 E_qp[k] + E_qq[k].
Var mmd_squared(Var zq, Var zp, double sigma);

/// Column-wise sample variance (divisor n - 1) of z after removing the column means.
DiagCovarianceVars diag_covariance(Var z, double eps_reg);

/// (mean(Zq) - mean(Zp))^T diag(inv) (mean(Zq) - mean(Zp)); `inv` has k elements.
Var mahalanobis_squared(Var zq, Var zp, Var inv);

/// mmd_squared(Zq, Zp) * mean_j(inv_j).
Var scaled_mmd(Var zq, Var zp, double sigma, Var inv);

/// Dispatch used by the training loss. The covariance for the Mahalanobis and scaled
/// forms is pooled over the rows of Zq and Zp.
Var divergence(const Params& params, Var zq, Var zp);

// Plain forms ------------------------------------------------------------------------

double gaussian_kernel_mean(const Tensor& a, const Tensor& b, double sigma);
double mmd_squared(const Tensor& zq, const Tensor& zp, double sigma);
DiagCovariance diag_covariance(const Tensor& z, double eps_reg);
double mahalanobis_squared(const Tensor& zq, const Tensor& zp, const DiagCovariance& cov);
double scaled_mmd(const Tensor& zq, const Tensor& zp, double sigma, const DiagCovariance& cov);

/// sqrt(k) unless an explicit positive bandwidth is configured.
double resolve_bandwidth(const Params& params, std::size_t latent_dim);

/// Median pairwise distance over the pooled rows of a and b.
double median_heuristic_bandwidth(const Tensor& a, const Tensor& b);

}  // namespace gcvae::divergences
