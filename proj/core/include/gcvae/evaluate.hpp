#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcvae/dataset.hpp"
#include "gcvae/metrics.hpp"
#include "gcvae/model.hpp"

namespace gcvae {

struct EvalOptions {
  int bins = 20;
  metrics::MigNormalization normalization = metrics::MigNormalization::code_sum;
  std::size_t max_n = 10000;  // larger datasets are subsampled to this many rows
  std::uint64_t seed = 0;
  std::size_t batch = 256;
  /// Replaces the encoder means [n,k] before scoring.
  std::function<Tensor(const Tensor&)> code_hook;
};

struct EvalReport {
  std::string variant = "unknown";
  std::size_t n = 0;
  double mig = 0.0;
  double modularity = 0.0;
  double jemmig = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  bool modularity_defined = true;
  std::vector<double> mig_per_factor;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Posterior means [n,k] in inference mode.
Tensor encode_means(const ModelParams& params, const data::Dataset& ds, std::size_t batch = 256);

/// Encodes the dataset and scores the means against its factors. Reconstruction and KL are the
/// training terms, with z drawn from the posterior under a seed derived from options.seed.
/// Throws ContractError for a factor-less dataset.
EvalReport eval_metrics(const ModelParams& params, const data::Dataset& ds, const EvalOptions& options = {});
EvalReport eval_metrics(const std::filesystem::path& checkpoint, const data::Dataset& ds,
                        const EvalOptions& options = {});

/// Columns in comparison-table order: variant, mig, modularity, jemmig, recon, kl, n, modularity_defined.
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);
EvalReport parse_report_row(const std::string& line);

/// metrics.csv (header + one row) and a readable metrics.txt.
void write_report(const EvalReport& r, const std::filesystem::path& dir);
EvalReport read_report(const std::filesystem::path& dir);

// Latent traversal ----------------------------------------------------------------------

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

struct TraverseOptions {
  std::size_t dim = 0;
  double range = 3.0;
  std::size_t steps = 11;
  /// Row 0 starts from z = 0; further rows start from seeded N(0, I) draws.
  std::size_t rows = 1;
  std::uint64_t seed = 0;
};

/// Decodes a grid with one row per base code and one column per value of z[dim] in
/// linspace(-range, range, steps) (0 when steps is 1). Pixels are sigmoid(logit) * 255 rounded.
GrayImage traverse(const ModelParams& params, const TraverseOptions& options);
std::string encode_pgm(const GrayImage& image);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

// Comparison report -------------------------------------------------------------------------

struct ReportEntry {
  std::string dir;
  EvalReport report;
};

struct ComparisonTable {
  std::vector<ReportEntry> rows;  // sorted in table variant order
  std::vector<std::string> missing;
};

ComparisonTable collect_reports(const std::vector<std::filesystem::path>& dirs);
std::string merged_csv(const ComparisonTable& table);
std::string aligned_table(const ComparisonTable& table);

}  // namespace gcvae
