#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcvae/adam.hpp"
#include "gcvae/config.hpp"
#include "gcvae/dataset.hpp"
#include "gcvae/evaluate.hpp"
#include "gcvae/model.hpp"

namespace gcvae {

/// Resolves a dataset by name. Real datasets are read from `data_path` when given, otherwise
/// from $GCVAE_DATA_DIR (mnist/train-images-idx3-ubyte + labels, dsprites/*.npz).
/// A positive `subsample_n` keeps a seeded subset of that size.
data::Dataset load_dataset(const std::string& name, std::size_t subsample_n, std::uint64_t data_seed,
                           const std::string& data_path = {});
data::Dataset load_dataset(const RunConfig& config);

/// Independent seed for stream `stream` at position `index` of a run seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

using WeightRule = std::function<control::WeightTriple(double recon, double kl, double corr)>;

struct StepOutput {
  objective::LossBreakdown loss;
  NamedTensors grads;
};

/// One forward and backward pass of the variant's loss on batch `x` in training mode.
/// The reparameterization noise comes from `eps_seed`; `prior` holds the N(0, I) draws the
/// divergence compares against and is ignored by variants without one. `weigh` maps the
/// measured terms to the weights used in the composed loss.
StepOutput loss_and_gradients(ModelParams& params, const objective::VariantConfig& variant,
                              const divergences::Params& divergence, const Tensor& x, std::uint64_t eps_seed,
                              const Tensor& prior, const WeightRule& weigh);

struct LogRow {
  std::size_t step = 0;
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double corr = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double wall_ms = 0.0;
};

std::string log_header();
std::string format_log_row(const LogRow& row);

/// Raised when the loss turns non-finite; the message ends with the last logged rows.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  std::size_t steps = 0;
  bool stopped_early = false;
  std::vector<LogRow> log;
  ModelParams params;
  EvalReport report;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint;
};

/// Trains per `config`, writing into config.out_dir:
///   train_log.csv, controller_trace.csv, mi_log.csv, config.json, checkpoint.gcvt,
///   metrics.csv and metrics.txt.
RunResult train(const RunConfig& config);
/// Same, on an already loaded dataset (config.dataset and subsampling are not consulted).
RunResult train(const RunConfig& config, const data::Dataset& dataset);

}  // namespace gcvae
