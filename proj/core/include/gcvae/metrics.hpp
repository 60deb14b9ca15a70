#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gcvae/tensor.hpp"

/// Disentanglement scores from latent codes and ground-truth factors, all built on a
/// plug-in (histogram) mutual information estimator in nats.
namespace gcvae::metrics {

using Column = std::vector<int>;

/// Ground-truth generative factors: n rows of K discrete values, column k in [0, V_k).
struct FactorTable {
  std::size_t n = 0;
  std::vector<int> cardinalities;
  std::vector<int> values;  // row-major n x K

  std::size_t num_factors() const { return cardinalities.size(); }
  int at(std::size_t row, std::size_t k) const { return values[row * cardinalities.size() + k]; }
  Column column(std::size_t k) const;
  /// Rows selected by `rows`, in that order.
  FactorTable select(std::span<const std::size_t> rows) const;
  /// Throws ValidationError when an entry lies outside its cardinality.
  void validate() const;
};

/// Equal-width binning of each column of an [n,k] tensor into `bins` bins spanning the
/// column's [min, max]. Constant columns map to bin 0.
std::vector<Column> discretize(const Tensor& codes, int bins);

double entropy(std::span<const int> a);
double joint_entropy(std::span<const int> a, std::span<const int> b);
/// sum_{u,v} p(u,v) ln(p(u,v) / (p(u) p(v))) over the empirical joint histogram.
double mutual_information(std::span<const int> a, std::span<const int> b);

/// mi[j][k] = I(z_j; y_k).
std::vector<std::vector<double>> mi_matrix(const std::vector<Column>& codes, const FactorTable& factors);

struct Scores {
  std::vector<double> per_item;
  double mean = 0.0;
};

/// code_sum divides the top-two gap by sum_j I(y_k; z_j); factor_entropy divides by H(y_k).
enum class MigNormalization { code_sum, factor_entropy };

/// Per factor: (I(y_k; z_I) - I(y_k; z_II)) / normalizer, with I and II the two most
/// informative codes. A zero normalizer scores 0.
Scores mig(const std::vector<Column>& codes, const FactorTable& factors,
           MigNormalization norm = MigNormalization::code_sum);

/// Per factor: 1 - [H(y_k, z_I) - I(y_k; z_I) + I(y_k; z_II)] / (H(y_k) + ln bins).
/// Higher is better; 1 means one code carries exactly the factor and no other code does.
Scores jemmig(const std::vector<Column>& codes, const FactorTable& factors, int bins);

/// Per code with theta_j = max_k I(z_j; y_k) > 0:
/// 1 - sum_{k != argmax} I(z_j; y_k)^2 / (theta_j^2 (K - 1)). Codes with theta_j = 0 are
/// skipped; throws UndefinedScore if every code is skipped.
Scores modularity(const std::vector<Column>& codes, const FactorTable& factors);

struct Report {
  Scores mig;
  Scores jemmig;
  Scores modularity;
  bool modularity_defined = true;
};

/// Discretizes `codes` [n,k] into `bins` bins and computes all three scores.
Report evaluate(const Tensor& codes, const FactorTable& factors, int bins = 20,
                MigNormalization norm = MigNormalization::code_sum);

}  // namespace gcvae::metrics
