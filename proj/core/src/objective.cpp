#include "gcvae/objective.hpp"

#include <cmath>

#include "gcvae/ops.hpp"

namespace gcvae::objective {
namespace {

void check_finite(const LossBreakdown& b) {
  if (!std::isfinite(b.recon_nll) || !std::isfinite(b.kl) || !std::isfinite(b.corr) || !std::isfinite(b.total)) {
    throw NonFiniteLoss("non-finite loss: total=" + std::to_string(b.total) + " recon=" + std::to_string(b.recon_nll) +
                            " kl=" + std::to_string(b.kl) + " corr=" + std::to_string(b.corr),
                        b);
  }
}

}  // namespace

const std::vector<Variant>& table_order() {
  static const std::vector<Variant> order{Variant::elbo,   Variant::beta_vae, Variant::control_vae, Variant::info_vae,
                                          Variant::gcvae1, Variant::gcvae2,   Variant::gcvae3};
  return order;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::elbo: return "elbo";
    case Variant::beta_vae: return "beta_vae";
    case Variant::control_vae: return "control_vae";
    case Variant::info_vae: return "info_vae";
    case Variant::gcvae1: return "gcvae1";
    case Variant::gcvae2: return "gcvae2";
    case Variant::gcvae3: return "gcvae3";
  }
  return "unknown";
}

std::string display_name(Variant v) {
  switch (v) {
    case Variant::elbo: return "VAE";
    case Variant::beta_vae: return "beta-VAE";
    case Variant::control_vae: return "ControlVAE";
    case Variant::info_vae: return "InfoVAE";
    case Variant::gcvae1: return "GCVAE-I";
    case Variant::gcvae2: return "GCVAE-II";
    case Variant::gcvae3: return "GCVAE-III";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : table_order()) {
    if (name == to_string(v)) return v;
  }
  if (name == "vae") return Variant::elbo;
  if (name == "factor_vae" || name == "factorvae") {
    throw UnsupportedVariant("variant 'factor_vae' is not supported: it needs an adversarial total-correlation "
                             "discriminator that this library does not provide");
  }
  throw UnsupportedVariant("unknown variant '" + name + "'");
}

VariantConfig variant_reduction(Variant name, const VariantDefaults& d) {
  VariantConfig c;
  c.name = name;
  switch (name) {
    case Variant::elbo:
      c.alpha = WeightMode::fixed(0.0);
      c.beta = WeightMode::fixed(1.0);
      c.gamma = WeightMode::fixed(0.0);
      break;
    case Variant::beta_vae:
      c.alpha = WeightMode::fixed(0.0);
      c.beta = WeightMode::fixed(d.beta_vae_beta);
      c.gamma = WeightMode::fixed(0.0);
      break;
    case Variant::control_vae:
      c.alpha = WeightMode::fixed(0.0);
      c.beta = WeightMode::pid(d.control_vae_target_kl);
      c.gamma = WeightMode::fixed(0.0);
      break;
    case Variant::info_vae:
      c.alpha = WeightMode::fixed(0.0);
      c.beta = WeightMode::fixed(0.0);
      c.gamma = WeightMode::fixed(d.info_vae_lambda);
      c.divergence = divergences::Kind::mmd;
      break;
    case Variant::gcvae1:
    case Variant::gcvae2:
    case Variant::gcvae3:
      c.recon = ReconWeighting::complement;
      c.alpha = WeightMode::pid(d.target_recon);
      c.beta = WeightMode::pid(d.target_kl);
      c.gamma = WeightMode::pid(d.target_corr);
      c.divergence = name == Variant::gcvae1   ? divergences::Kind::mmd
                     : name == Variant::gcvae2 ? divergences::Kind::mahalanobis
                                               : divergences::Kind::scaled_mmd;
      break;
  }
  return c;
}

VariantConfig variant_reduction(const std::string& name, const VariantDefaults& defaults) {
  return variant_reduction(parse_variant(name), defaults);
}

double recon_coefficient(ReconWeighting weighting, const control::WeightTriple& w) {
  return weighting == ReconWeighting::unit ? 1.0 : 1.0 - w.alpha - w.beta;
}

LossBreakdown compose_loss(double recon_nll, double kl, double corr, const control::WeightTriple& weights,
                           ReconWeighting weighting) {
  LossBreakdown b;
  b.recon_nll = recon_nll;
  b.kl = kl;
  b.corr = corr;
  b.weights = weights;
  b.recon_weight = recon_coefficient(weighting, weights);
  b.total = b.recon_weight * recon_nll + weights.beta * kl + weights.gamma * corr;
  check_finite(b);
  return b;
}

ComposedLoss compose_loss(Var recon_nll, Var kl, Var corr, const control::WeightTriple& weights,
                          ReconWeighting weighting) {
  const double corr_value = corr.valid() ? corr.value().item() : 0.0;
  LossBreakdown b = compose_loss(recon_nll.value().item(), kl.value().item(), corr_value, weights, weighting);
  Var total = ops::add(ops::scalar_mul(recon_nll, b.recon_weight), ops::scalar_mul(kl, weights.beta));
  if (corr.valid()) total = ops::add(total, ops::scalar_mul(corr, weights.gamma));
  // Same evaluation order as the scalar form.
  b.total = total.value().item();
  check_finite(b);
  return {total, b};
}

MutualInfoReport mutual_info_report(double recon_nll, double kl, double corr) { return {-recon_nll, kl - corr}; }

}  // namespace gcvae::objective
