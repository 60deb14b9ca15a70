#include "gcvae/train.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <fstream>

#include "gcvae/errors.hpp"
#include "gcvae/ops.hpp"

namespace gcvae {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kEpsStream = 2;
constexpr std::uint64_t kPriorStream = 3;
constexpr std::uint64_t kInitStream = 4;
constexpr std::size_t kFlushEvery = 100;
constexpr std::size_t kTailRows = 10;

fs::path data_root(const std::string& data_path, const std::string& name) {
  if (!data_path.empty()) return data_path;
  const char* env = std::getenv("GCVAE_DATA_DIR");
  if (env == nullptr || *env == '\0') {
    throw IoError("dataset '" + name + "' needs data_path or $GCVAE_DATA_DIR");
  }
  return fs::path(env) / name;
}

fs::path first_npz(const fs::path& root) {
  if (fs::is_regular_file(root)) return root;
  if (fs::is_directory(root)) {
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.path().extension() == ".npz") found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    if (!found.empty()) return found.front();
  }
  throw IoError("no .npz archive under " + root.string());
}

class CsvSink {
 public:
  CsvSink(const fs::path& path, const std::string& header) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
    write(header);
  }
  void write(const std::string& line) {
    out_ << line << '\n';
    if (!out_) throw IoError("write failed on " + path_.string());
  }
  void flush() {
    out_.flush();
    if (!out_) throw IoError("flush failed on " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

struct Controllers {
  std::optional<control::ControllerState> alpha, beta, gamma;
};

std::optional<control::ControllerState> make_controller(const objective::WeightMode& mode,
                                                        const control::PidGains& gains) {
  if (!mode.is_pid()) return std::nullopt;
  control::ControllerState s;
  s.gains = gains;
  s.set_point = mode.value;
  return s;
}

std::string trace_cell(const std::optional<control::PidStep>& step, bool integral) {
  if (!step) return ",";
  return "," + num(integral ? step->state.integral : step->error);
}

}  // namespace

data::Dataset load_dataset(const std::string& name, std::size_t subsample_n, std::uint64_t data_seed,
                           const std::string& data_path) {
  data::Dataset ds;
  if (name == "synth") {
    return data::synth_sprites(subsample_n > 0 ? subsample_n : 737, data_seed);
  } else if (name == "mnist") {
    const fs::path root = data_root(data_path, name);
    ds = data::load_mnist_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte");
  } else if (name == "dsprites") {
    ds = data::load_dsprites_npz(first_npz(data_root(data_path, name)));
  } else {
    throw ValidationError("unknown dataset '" + name + "'");
  }
  if (subsample_n > 0 && subsample_n < ds.n) ds = data::subsample(ds, subsample_n, data_seed);
  return ds;
}

data::Dataset load_dataset(const RunConfig& config) {
  return load_dataset(config.dataset, config.subsample_n, config.data_seed, config.data_path);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 finalizer over a combination of the three words
  std::uint64_t z = base * 0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL + index * 0x94d049bb133111ebULL +
                    0x2545f4914f6cdd1dULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

StepOutput loss_and_gradients(ModelParams& params, const objective::VariantConfig& variant,
                              const divergences::Params& divergence, const Tensor& x, std::uint64_t eps_seed,
                              const Tensor& prior, const WeightRule& weigh) {
  Tape tape;
  VaeGraph graph(tape, params, true, true);
  const Var input = tape.constant(x);
  const auto post = graph.encode(input);
  const Var z = reparameterize(post.mu, post.log_var, eps_seed);
  const Var logits = graph.decode(z);
  const Var recon = reconstruction_nll(input, logits);
  const Var kl = kl_gaussian_standard(post.mu, post.log_var);
  Var corr;
  if (variant.divergence) {
    divergences::Params p = divergence;
    p.kind = *variant.divergence;
    corr = divergences::divergence(p, z, tape.constant(prior));
  }
  const double corr_value = corr.valid() ? corr.value().item() : 0.0;
  const control::WeightTriple w = weigh(recon.value().item(), kl.value().item(), corr_value);
  const auto composed = objective::compose_loss(recon, kl, corr, w, variant.recon);
  StepOutput out;
  out.loss = composed.breakdown;
  out.grads = graph.named_gradients(tape.backward(composed.total));
  return out;
}

std::string log_header() { return "step,total,recon,kl,corr,alpha,beta,gamma,wall_ms"; }

std::string format_log_row(const LogRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{:.3f}", r.step, num(r.total), num(r.recon), num(r.kl), num(r.corr),
                     num(r.alpha), num(r.beta), num(r.gamma), r.wall_ms);
}

RunResult train(const RunConfig& config) {
  config.validate();
  objective::parse_variant(config.variant);
  return train(config, load_dataset(config));
}

RunResult train(const RunConfig& config, const data::Dataset& dataset) {
  config.validate();
  const objective::VariantConfig variant = objective::variant_reduction(config.variant, config.variant_defaults());
  const divergences::Params div_params =
      config.divergence_params(variant.divergence.value_or(divergences::Kind::mahalanobis));

  ModelSpec spec;
  spec.arch = parse_arch(config.arch);
  spec.latent_dim = config.latent_dim;
  spec.image_h = dataset.height;
  spec.image_w = dataset.width;
  spec.caption_mode = config.caption_mode;

  RunResult result;
  result.out_dir = config.out_dir;
  result.params = init_params(spec, derive_seed(config.seed, kInitStream, 0));
  fs::create_directories(result.out_dir);
  save_config(config, result.out_dir / "config.json");

  CsvSink log_csv(result.out_dir / "train_log.csv", log_header());
  CsvSink trace_csv(result.out_dir / "controller_trace.csv",
                    "step,alpha_error,alpha_integral,beta_error,beta_integral,gamma_error,gamma_integral");
  CsvSink mi_csv(result.out_dir / "mi_log.csv", "step,i_p,i_q");

  Controllers ctl{make_controller(variant.alpha, config.gains_alpha()),
                  make_controller(variant.beta, config.gains_beta()),
                  make_controller(variant.gamma, config.gains_gamma())};
  const bool projected = variant.recon == objective::ReconWeighting::complement;

  data::BatchStream stream = data::batches(dataset, config.batch_size, derive_seed(config.seed, kBatchStream, 0));
  AdamState adam;
  AdamConfig adam_config;
  adam_config.lr = config.lr;

  std::deque<std::string> tail;
  control::WeightTriple previous;
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<std::size_t> rows = stream.next();
    const Tensor x = dataset.images(rows);
    const Tensor prior =
        variant.divergence
            ? standard_normal({config.batch_size, config.latent_dim}, derive_seed(config.seed, kPriorStream, step))
            : Tensor();

    std::optional<control::PidStep> pa, pb, pg;
    const WeightRule weigh = [&](double recon, double kl, double corr) {
      control::WeightTriple w{variant.alpha.value, variant.beta.value, variant.gamma.value};
      if (ctl.alpha) pa = control::pid_step(*ctl.alpha, recon), w.alpha = pa->weight;
      if (ctl.beta) pb = control::pid_step(*ctl.beta, kl), w.beta = pb->weight;
      if (ctl.gamma) pg = control::pid_step(*ctl.gamma, corr), w.gamma = pg->weight;
      return projected ? control::clamp_weights(w) : w;
    };

    StepOutput out;
    try {
      out = loss_and_gradients(result.params, variant, div_params, x, derive_seed(config.seed, kEpsStream, step),
                               prior, weigh);
    } catch (const objective::NonFiniteLoss& e) {
      std::string msg = fmt::format("training diverged at step {}: {}\nlast rows:\n{}\n", step, e.what(), log_header());
      for (const auto& line : tail) msg += line + "\n";
      log_csv.flush();
      throw TrainingDiverged(msg);
    }
    if (pa) ctl.alpha = pa->state;
    if (pb) ctl.beta = pb->state;
    if (pg) ctl.gamma = pg->state;

    adam_step({&result.params.encoder, &result.params.decoder}, out.grads, adam, adam_config);

    const auto& b = out.loss;
    LogRow row{step, b.total, b.recon_nll, b.kl, b.corr, b.weights.alpha, b.weights.beta, b.weights.gamma,
               std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count()};
    const std::string line = format_log_row(row);
    log_csv.write(line);
    trace_csv.write(fmt::format("{}{}{}{}{}{}{}", step, trace_cell(pa, false), trace_cell(pa, true),
                                trace_cell(pb, false), trace_cell(pb, true), trace_cell(pg, false),
                                trace_cell(pg, true)));
    const auto mi = objective::mutual_info_report(b.recon_nll, b.kl, b.corr);
    mi_csv.write(fmt::format("{},{},{}", step, num(mi.i_p), num(mi.i_q)));
    tail.push_back(line);
    if (tail.size() > kTailRows) tail.pop_front();
    result.log.push_back(row);
    result.steps = step;

    if (step % kFlushEvery == 0) {
      log_csv.flush();
      trace_csv.flush();
      mi_csv.flush();
    }
    const bool converged = config.stopping && step > config.warmup && step > 1 &&
                           control::stopping_check(b.weights.alpha, previous.alpha, b.weights.beta, previous.beta,
                                                   config.eps_a, config.eps_b);
    previous = b.weights;
    if (converged) {
      result.stopped_early = step < config.max_steps;
      break;
    }
  }
  log_csv.flush();
  trace_csv.flush();
  mi_csv.flush();

  NamedTensors records = to_checkpoint(result.params);
  const auto& order = objective::table_order();
  const auto pos = std::find(order.begin(), order.end(), variant.name) - order.begin();
  records.emplace("meta.variant", Tensor::scalar(static_cast<double>(pos)));
  result.checkpoint = result.out_dir / "checkpoint.gcvt";
  save_checkpoint(result.checkpoint, records);

  if (dataset.factors) {
    EvalOptions eval;
    eval.bins = config.bins;
    eval.normalization = config.normalization();
    eval.max_n = config.eval_max_n;
    eval.seed = config.data_seed;
    result.report = eval_metrics(result.params, dataset, eval);
    result.report.variant = objective::to_string(variant.name);
    write_report(result.report, result.out_dir);
  }
  return result;
}

}  // namespace gcvae
