#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gcvae/control.hpp"
#include "gcvae/divergences.hpp"
#include "gcvae/errors.hpp"
#include "gcvae/tape.hpp"

namespace gcvae::objective {

enum class Variant { elbo, beta_vae, control_vae, info_vae, gcvae1, gcvae2, gcvae3 };

/// Variants in the row order of the comparison table.
const std::vector<Variant>& table_order();
std::string to_string(Variant v);
/// Row label used in reports ("VAE", "beta-VAE", ..., "GCVAE-III").
std::string display_name(Variant v);
/// Accepts the names produced by to_string plus "vae". "factor_vae" raises UnsupportedVariant.
Variant parse_variant(const std::string& name);

/// How one weight evolves: a constant, or a PID controller tracking `value` as its set point.
struct WeightMode {
  enum class Kind { fixed, pid };
  Kind kind = Kind::fixed;
  double value = 0.0;

  static WeightMode fixed(double v) { return {Kind::fixed, v}; }
  static WeightMode pid(double set_point) { return {Kind::pid, set_point}; }
  bool is_pid() const { return kind == Kind::pid; }
};

/// unit: reconstruction weighted by exactly 1 (ELBO, beta-VAE, ControlVAE, InfoVAE rows).
/// complement: weighted by 1 - alpha - beta (GCVAE rows).
enum class ReconWeighting { unit, complement };

struct VariantConfig {
  Variant name = Variant::elbo;
  ReconWeighting recon = ReconWeighting::unit;
  WeightMode alpha;
  WeightMode beta;
  WeightMode gamma;
  std::optional<divergences::Kind> divergence;
};

/// Per-variant defaults that callers may override.
struct VariantDefaults {
  double beta_vae_beta = 10.0;
  double info_vae_lambda = 1000.0;
  double control_vae_target_kl = 10.0;
  double target_recon = 10.0;
  double target_kl = 30.0;
  double target_corr = 0.1;
};

VariantConfig variant_reduction(Variant name, const VariantDefaults& defaults = {});
VariantConfig variant_reduction(const std::string& name, const VariantDefaults& defaults = {});

struct LossBreakdown {
  double total = 0.0;
  double recon_nll = 0.0;
  double kl = 0.0;
  double corr = 0.0;
  double recon_weight = 1.0;
  control::WeightTriple weights;
};

/// Thrown when a loss term or the total is not finite; carries the offending breakdown.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, LossBreakdown breakdown)
      : std::runtime_error(what), breakdown_(breakdown) {}
  const LossBreakdown& breakdown() const noexcept { return breakdown_; }

 private:
  LossBreakdown breakdown_;
};

/// Coefficient on the reconstruction term for the given weighting.
double recon_coefficient(ReconWeighting weighting, const control::WeightTriple& w);

/// total = c * recon + beta * kl + gamma * corr, with c from `recon_coefficient`.
/// Minimization convention: every term is a penalty.
LossBreakdown compose_loss(double recon_nll, double kl, double corr, const control::WeightTriple& weights,
                           ReconWeighting weighting = ReconWeighting::complement);

struct ComposedLoss {
  Var total;
  LossBreakdown breakdown;
};

/// Differentiable form. `corr` may be an invalid Var when the variant has no divergence term.
ComposedLoss compose_loss(Var recon_nll, Var kl, Var corr, const control::WeightTriple& weights,
                          ReconWeighting weighting = ReconWeighting::complement);

struct MutualInfoReport {
  double i_p = 0.0;  // -recon_nll
  double i_q = 0.0;  // kl - corr
};

MutualInfoReport mutual_info_report(double recon_nll, double kl, double corr);

}  // namespace gcvae::objective
