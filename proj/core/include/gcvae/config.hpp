#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gcvae/control.hpp"
#include "gcvae/divergences.hpp"
#include "gcvae/metrics.hpp"
#include "gcvae/objective.hpp"

namespace gcvae {

/// Everything a training run depends on. Serialized as a flat JSON object whose keys are
/// exactly the field names below.
struct RunConfig {
  std::string variant = "gcvae2";
  std::string dataset = "synth";  // synth | mnist | dsprites
  std::size_t subsample_n = 737;  // 0 keeps the whole dataset
  std::uint64_t data_seed = 0;
  std::string data_path;  // overrides $GCVAE_DATA_DIR lookup
  std::size_t latent_dim = 10;
  std::string arch = "mlp";
  bool caption_mode = false;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t max_steps = 2000;
  bool stopping = false;
  double eps_a = 1e-4;
  double eps_b = 1e-3;
  std::size_t warmup = 50;
  std::uint64_t seed = 0;

  double target_recon = 10.0;
  double target_kl = 30.0;
  double target_corr = 0.1;
  double kp_alpha = 0.01, ki_alpha = 1e-4, min_alpha = 0.0;
  double kp_beta = 0.01, ki_beta = 1e-4, min_beta = 0.0;
  double kp_gamma = 0.01, ki_gamma = 1e-4, min_gamma = 0.0;
  double integral_cap = 0.0;  // <= 0 leaves the integral unbounded

  double beta_vae_beta = 10.0;
  double info_vae_lambda = 1000.0;
  double control_vae_target_kl = 10.0;

  double sigma_k = 0.0;  // <= 0 means sqrt(latent_dim)
  bool median_bandwidth = false;
  double eps_reg = 1e-6;

  int bins = 20;
  std::string mig_normalization = "code_sum";  // code_sum | factor_entropy
  std::size_t eval_max_n = 10000;

  std::string out_dir = "runs/default";

  objective::VariantDefaults variant_defaults() const;
  control::PidGains gains_alpha() const;
  control::PidGains gains_beta() const;
  control::PidGains gains_gamma() const;
  divergences::Params divergence_params(divergences::Kind kind) const;
  metrics::MigNormalization normalization() const;

  /// Throws ValidationError on out-of-range values or unknown enum names.
  void validate() const;
};

std::string to_json(const RunConfig& config);
/// Keys not listed in RunConfig raise ValidationError.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace gcvae
