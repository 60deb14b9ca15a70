#include "gcvae/config.hpp"

#include <fstream>
#include <json.hpp>

#include "gcvae/dataset.hpp"
#include "gcvae/errors.hpp"
#include "gcvae/model.hpp"

namespace gcvae {
namespace {

using nlohmann::json;

// One table drives both directions so the key set cannot drift.
template <class Visitor>
void visit_fields(RunConfig& c, Visitor&& v) {
  v("variant", c.variant);
  v("dataset", c.dataset);
  v("subsample_n", c.subsample_n);
  v("data_seed", c.data_seed);
  v("data_path", c.data_path);
  v("latent_dim", c.latent_dim);
  v("arch", c.arch);
  v("caption_mode", c.caption_mode);
  v("batch_size", c.batch_size);
  v("lr", c.lr);
  v("max_steps", c.max_steps);
  v("stopping", c.stopping);
  v("eps_a", c.eps_a);
  v("eps_b", c.eps_b);
  v("warmup", c.warmup);
  v("seed", c.seed);
  v("target_recon", c.target_recon);
  v("target_kl", c.target_kl);
  v("target_corr", c.target_corr);
  v("kp_alpha", c.kp_alpha);
  v("ki_alpha", c.ki_alpha);
  v("min_alpha", c.min_alpha);
  v("kp_beta", c.kp_beta);
  v("ki_beta", c.ki_beta);
  v("min_beta", c.min_beta);
  v("kp_gamma", c.kp_gamma);
  v("ki_gamma", c.ki_gamma);
  v("min_gamma", c.min_gamma);
  v("integral_cap", c.integral_cap);
  v("beta_vae_beta", c.beta_vae_beta);
  v("info_vae_lambda", c.info_vae_lambda);
  v("control_vae_target_kl", c.control_vae_target_kl);
  v("sigma_k", c.sigma_k);
  v("median_bandwidth", c.median_bandwidth);
  v("eps_reg", c.eps_reg);
  v("bins", c.bins);
  v("mig_normalization", c.mig_normalization);
  v("eval_max_n", c.eval_max_n);
  v("out_dir", c.out_dir);
}

control::PidGains gains(double kp, double ki, double min_value, double cap) {
  control::PidGains g;
  g.kp = kp;
  g.ki = ki;
  g.min_value = min_value;
  if (cap > 0.0) g.integral_cap = cap;
  return g;
}

}  // namespace

objective::VariantDefaults RunConfig::variant_defaults() const {
  objective::VariantDefaults d;
  d.beta_vae_beta = beta_vae_beta;
  d.info_vae_lambda = info_vae_lambda;
  d.control_vae_target_kl = control_vae_target_kl;
  d.target_recon = target_recon;
  d.target_kl = target_kl;
  d.target_corr = target_corr;
  return d;
}

control::PidGains RunConfig::gains_alpha() const { return gains(kp_alpha, ki_alpha, min_alpha, integral_cap); }
control::PidGains RunConfig::gains_beta() const { return gains(kp_beta, ki_beta, min_beta, integral_cap); }
control::PidGains RunConfig::gains_gamma() const { return gains(kp_gamma, ki_gamma, min_gamma, integral_cap); }

divergences::Params RunConfig::divergence_params(divergences::Kind kind) const {
  divergences::Params p;
  p.kind = kind;
  p.kernel_bandwidth = sigma_k;
  p.median_bandwidth = median_bandwidth;
  p.cov_regularizer = eps_reg;
  return p;
}

metrics::MigNormalization RunConfig::normalization() const {
  if (mig_normalization == "code_sum") return metrics::MigNormalization::code_sum;
  if (mig_normalization == "factor_entropy") return metrics::MigNormalization::factor_entropy;
  throw ValidationError("mig_normalization must be code_sum or factor_entropy, got '" + mig_normalization + "'");
}

void RunConfig::validate() const {
  objective::parse_variant(variant);
  if (dataset != "synth" && dataset != "mnist" && dataset != "dsprites") {
    throw ValidationError("dataset must be synth, mnist or dsprites, got '" + dataset + "'");
  }
  try {
    parse_arch(arch);
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }
  normalization();
  if (latent_dim == 0) throw ValidationError("latent_dim must be positive");
  if (batch_size < 2) throw ValidationError("batch_size must be at least 2");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (max_steps == 0) throw ValidationError("max_steps must be positive");
  if (!(eps_a > 0.0) || !(eps_b > 0.0)) throw ValidationError("eps_a and eps_b must be positive");
  if (!(eps_reg > 0.0)) throw ValidationError("eps_reg must be positive");
  if (bins < 2) throw ValidationError("bins must be at least 2");
  if (out_dir.empty()) throw ValidationError("out_dir must not be empty");
}

std::string to_json(const RunConfig& config) {
  json j = json::object();
  RunConfig copy = config;
  visit_fields(copy, [&j](const char* key, auto& field) { j[key] = field; });
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config: top level must be a JSON object");
  RunConfig c;
  std::size_t known = 0;
  visit_fields(c, [&](const char* key, auto& field) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    ++known;
    try {
      it->get_to(field);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  });
  if (known != j.size()) {
    RunConfig probe;
    for (const auto& item : j.items()) {
      bool found = false;
      visit_fields(probe, [&](const char* key, auto&) { found = found || item.key() == key; });
      if (!found) throw ValidationError("config: unknown key '" + item.key() + "'");
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return config_from_json(data::read_file(path)); }

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_json(config);
  if (!f) throw IoError("short write to " + path.string());
}

}  // namespace gcvae
