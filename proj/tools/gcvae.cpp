#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gcvae/config.hpp"
#include "gcvae/evaluate.hpp"
#include "gcvae/train.hpp"

namespace {

namespace fs = std::filesystem;

struct TrainArgs {
  std::string config_path;
  std::optional<std::string> variant, dataset, arch, out, data_path;
  std::optional<std::size_t> latent_dim, steps, warmup, subsample_n, batch_size;
  std::optional<std::uint64_t> seed, data_seed;
  std::optional<double> lr;
  std::optional<bool> stopping;
};

template <class T>
void override_with(T& field, const std::optional<T>& value) {
  if (value) field = *value;
}

int run_train(const TrainArgs& a) {
  gcvae::RunConfig c = a.config_path.empty() ? gcvae::RunConfig{} : gcvae::load_config(a.config_path);
  override_with(c.variant, a.variant);
  override_with(c.dataset, a.dataset);
  override_with(c.arch, a.arch);
  override_with(c.out_dir, a.out);
  override_with(c.data_path, a.data_path);
  override_with(c.latent_dim, a.latent_dim);
  override_with(c.max_steps, a.steps);
  override_with(c.warmup, a.warmup);
  override_with(c.subsample_n, a.subsample_n);
  override_with(c.batch_size, a.batch_size);
  override_with(c.seed, a.seed);
  override_with(c.data_seed, a.data_seed);
  override_with(c.lr, a.lr);
  override_with(c.stopping, a.stopping);

  const gcvae::RunResult r = gcvae::train(c);
  const auto& last = r.log.back();
  fmt::print("{} steps{} | recon {:.5f} kl {:.4f} corr {:.4g} | alpha {:.4g} beta {:.4g} gamma {:.4g}\n", r.steps,
             r.stopped_early ? " (stopped)" : "", last.recon, last.kl, last.corr, last.alpha, last.beta, last.gamma);
  fmt::print("{}\n{}\n", gcvae::report_csv_header(), gcvae::report_csv_row(r.report));
  fmt::print("outputs in {}\n", r.out_dir.string());
  return 0;
}

struct DataArgs {
  std::string dataset = "synth";
  std::size_t subsample_n = 0;
  std::uint64_t data_seed = 0;
  std::string data_path;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--dataset", d.dataset, "synth, mnist or dsprites")->capture_default_str();
  cmd->add_option("--subsample-n", d.subsample_n, "keep a seeded subset of this size (0: all; synth: 737)");
  cmd->add_option("--data-seed", d.data_seed, "seed for synthesis and subsampling");
  cmd->add_option("--data-path", d.data_path, "dataset directory or archive, overrides $GCVAE_DATA_DIR");
}

int run_eval(const std::string& checkpoint, const DataArgs& d, int bins, const std::string& out) {
  const auto ds = gcvae::load_dataset(d.dataset, d.subsample_n, d.data_seed, d.data_path);
  gcvae::EvalOptions opt;
  opt.bins = bins;
  opt.seed = d.data_seed;
  const gcvae::EvalReport r = gcvae::eval_metrics(fs::path(checkpoint), ds, opt);
  fmt::print("{}\n{}\n", gcvae::report_csv_header(), gcvae::report_csv_row(r));
  if (!out.empty()) gcvae::write_report(r, out);
  return 0;
}

int run_traverse(const std::string& checkpoint, const gcvae::TraverseOptions& o, const std::string& out) {
  const auto params = gcvae::from_checkpoint(gcvae::load_checkpoint(checkpoint));
  const auto img = gcvae::traverse(params, o);
  gcvae::write_pgm(img, out);
  fmt::print("wrote {} ({}x{})\n", out, img.width, img.height);
  return 0;
}

int run_report(const std::vector<std::string>& dirs, const std::string& csv_out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const auto table = gcvae::collect_reports(paths);
  fmt::print("{}", gcvae::aligned_table(table));
  if (!csv_out.empty()) {
    std::ofstream f(csv_out);
    f << gcvae::merged_csv(table);
    if (!f) throw gcvae::IoError("cannot write " + csv_out);
  }
  for (const auto& dir : table.missing) fmt::print(stderr, "missing metric report: {}\n", dir);
  return table.missing.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large freed blocks in the heap; otherwise every step re-faults fresh pages.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Train and evaluate GCVAE-family models"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train one variant");
  train->add_option("--config", ta.config_path, "flat JSON run configuration");
  train->add_option("--variant", ta.variant, "elbo, beta_vae, control_vae, info_vae, gcvae1, gcvae2, gcvae3");
  train->add_option("--dataset", ta.dataset, "synth, mnist or dsprites");
  train->add_option("--arch", ta.arch, "mlp or conv64");
  train->add_option("--latent-dim", ta.latent_dim);
  train->add_option("--steps", ta.steps, "maximum optimizer steps");
  train->add_option("--warmup", ta.warmup, "steps before the stopping rule may fire");
  train->add_option("--stopping", ta.stopping, "enable the weight-convergence stopping rule (true/false)");
  train->add_option("--seed", ta.seed);
  train->add_option("--data-seed", ta.data_seed);
  train->add_option("--subsample-n", ta.subsample_n);
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--lr", ta.lr);
  train->add_option("--data-path", ta.data_path);
  train->add_option("--out", ta.out, "output directory");

  std::string eval_ckpt, eval_out;
  int eval_bins = 20;
  DataArgs eval_data;
  auto* eval = app.add_subcommand("eval", "score a checkpoint against a factor-annotated dataset");
  eval->add_option("--checkpoint", eval_ckpt)->required();
  add_data_options(eval, eval_data);
  eval->add_option("--bins", eval_bins)->capture_default_str();
  eval->add_option("--out", eval_out, "directory for metrics.csv / metrics.txt");

  std::string trav_ckpt, trav_out = "traverse.pgm";
  gcvae::TraverseOptions trav;
  auto* traverse = app.add_subcommand("traverse", "decode a sweep along one latent dimension to a PGM grid");
  traverse->add_option("--checkpoint", trav_ckpt)->required();
  traverse->add_option("--dim", trav.dim)->required();
  traverse->add_option("--range", trav.range)->capture_default_str();
  traverse->add_option("--steps", trav.steps)->capture_default_str();
  traverse->add_option("--rows", trav.rows, "base codes, one per grid row")->capture_default_str();
  traverse->add_option("--seed", trav.seed);
  traverse->add_option("--out", trav_out)->capture_default_str();

  std::vector<std::string> report_dirs;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "merge run metric reports into one table");
  report->add_option("dirs", report_dirs, "run directories")->required();
  report->add_option("--csv", report_csv, "also write the merged CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(ta);
    if (*eval) return run_eval(eval_ckpt, eval_data, eval_bins, eval_out);
    if (*traverse) return run_traverse(trav_ckpt, trav, trav_out);
    if (*report) return run_report(report_dirs, report_csv);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
