#include "gcvae/evaluate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gcvae/errors.hpp"
#include "gcvae/objective.hpp"
#include "gcvae/ops.hpp"
#include "gcvae/train.hpp"

namespace gcvae {
namespace {

namespace fs = std::filesystem;

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

Tensor as_model_input(const ModelParams& params, Tensor images) {
  if (params.spec.image_h * params.spec.image_w != images.numel() / images.dim(0)) {
    throw ContractError("model expects " + std::to_string(params.spec.image_h) + "x" +
                        std::to_string(params.spec.image_w) + " images, dataset has " + shape_str(images.shape()));
  }
  return images;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("metric report: bad ") + what + " '" + s + "'");
  }
}

int variant_rank(const std::string& name) {
  const auto& order = objective::table_order();
  try {
    const auto v = objective::parse_variant(name);
    return static_cast<int>(std::find(order.begin(), order.end(), v) - order.begin());
  } catch (const std::exception&) {
    return static_cast<int>(order.size());
  }
}

std::string row_label(const std::string& variant) {
  try {
    return objective::display_name(objective::parse_variant(variant));
  } catch (const std::exception&) {
    return variant;
  }
}

constexpr std::uint64_t kEvalEpsStream = 5;

}  // namespace

Tensor encode_means(const ModelParams& params, const data::Dataset& ds, std::size_t batch) {
  ModelParams local = params;
  const std::size_t k = params.spec.latent_dim;
  Tensor means({ds.n, k});
  for (std::size_t begin = 0; begin < ds.n; begin += batch) {
    const std::size_t end = std::min(ds.n, begin + batch);
    const auto rows = iota_range(begin, end);
    Tape tape;
    VaeGraph graph(tape, local, false, false);
    const auto post = graph.encode(tape.constant(as_model_input(params, ds.images(rows))));
    const Tensor& mu = post.mu.value();
    std::copy(mu.data().begin(), mu.data().end(), means.ptr() + begin * k);
  }
  return means;
}

EvalReport eval_metrics(const ModelParams& params, const data::Dataset& full, const EvalOptions& options) {
  if (!full.factors) throw ContractError("eval_metrics: dataset '" + full.name + "' has no factors");
  const data::Dataset ds = full.n > options.max_n ? data::subsample(full, options.max_n, options.seed) : full;

  ModelParams local = params;
  const std::size_t k = params.spec.latent_dim;
  Tensor means({ds.n, k});
  double recon_sum = 0.0, kl_sum = 0.0;
  for (std::size_t begin = 0; begin < ds.n; begin += options.batch) {
    const std::size_t end = std::min(ds.n, begin + options.batch);
    const auto rows = iota_range(begin, end);
    Tape tape;
    VaeGraph graph(tape, local, false, false);
    const Var x = tape.constant(as_model_input(params, ds.images(rows)));
    const auto post = graph.encode(x);
    // recon is the training term: one seeded posterior sample per row, not a decode at the mean
    const Var z = reparameterize(post.mu, post.log_var, derive_seed(options.seed, kEvalEpsStream, begin));
    const Var logits = graph.decode(z);
    const double weight = static_cast<double>(end - begin);
    recon_sum += reconstruction_nll(x, logits).value().item() * weight;
    kl_sum += kl_gaussian_standard(post.mu, post.log_var).value().item() * weight;
    const Tensor& mu = post.mu.value();
    std::copy(mu.data().begin(), mu.data().end(), means.ptr() + begin * k);
  }

  const Tensor codes = options.code_hook ? options.code_hook(means) : means;
  const metrics::Report m = metrics::evaluate(codes, *ds.factors, options.bins, options.normalization);
  EvalReport r;
  r.n = ds.n;
  r.mig = m.mig.mean;
  r.mig_per_factor = m.mig.per_item;
  r.modularity = m.modularity.mean;
  r.modularity_defined = m.modularity_defined;
  r.jemmig = m.jemmig.mean;
  r.recon = recon_sum / static_cast<double>(ds.n);
  r.kl = kl_sum / static_cast<double>(ds.n);
  return r;
}

EvalReport eval_metrics(const fs::path& checkpoint, const data::Dataset& ds, const EvalOptions& options) {
  const NamedTensors records = load_checkpoint(checkpoint);
  EvalReport r = eval_metrics(from_checkpoint(records), ds, options);
  if (auto it = records.find("meta.variant"); it != records.end()) {
    const auto idx = static_cast<std::size_t>(it->second.item());
    if (idx < objective::table_order().size()) r.variant = objective::to_string(objective::table_order()[idx]);
  }
  return r;
}

std::string report_csv_header() { return "variant,mig,modularity,jemmig,recon,kl,n,modularity_defined"; }

std::string report_csv_row(const EvalReport& r) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}", r.variant, r.mig, r.modularity, r.jemmig,
                     r.recon, r.kl, r.n, r.modularity_defined ? 1 : 0);
}

EvalReport parse_report_row(const std::string& line) {
  const auto cells = split_csv(line);
  if (cells.size() != 8) throw FormatError("metric report: expected 8 columns, got " + std::to_string(cells.size()));
  EvalReport r;
  r.variant = cells[0];
  r.mig = parse_double(cells[1], "mig");
  r.modularity = parse_double(cells[2], "modularity");
  r.jemmig = parse_double(cells[3], "jemmig");
  r.recon = parse_double(cells[4], "recon");
  r.kl = parse_double(cells[5], "kl");
  r.n = static_cast<std::size_t>(parse_double(cells[6], "n"));
  r.modularity_defined = cells[7] == "1";
  return r;
}

void write_report(const EvalReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
    csv << report_csv_header() << '\n' << report_csv_row(r) << '\n';
    if (!csv) throw IoError("write failed on " + (dir / "metrics.csv").string());
  }
  std::ofstream txt(dir / "metrics.txt");
  if (!txt) throw IoError("cannot write " + (dir / "metrics.txt").string());
  txt << fmt::format("variant     {}\n", row_label(r.variant));
  txt << fmt::format("samples     {}\n", r.n);
  txt << fmt::format("MIG         {:.4f}\n", r.mig);
  txt << fmt::format("Modularity  {}\n", r.modularity_defined ? fmt::format("{:.4f}", r.modularity) : "undefined");
  txt << fmt::format("JEMMIG      {:.4f}\n", r.jemmig);
  txt << fmt::format("recon       {:.4f}\n", r.recon);
  txt << fmt::format("KL          {:.4f}\n", r.kl);
  for (std::size_t k = 0; k < r.mig_per_factor.size(); ++k) {
    txt << fmt::format("MIG[{}]      {:.4f}\n", k, r.mig_per_factor[k]);
  }
}

EvalReport read_report(const fs::path& dir) {
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw IoError("no metric report in " + dir.string());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  if (header != report_csv_header()) throw FormatError("metric report in " + dir.string() + ": unexpected header");
  return parse_report_row(row);
}

GrayImage traverse(const ModelParams& params, const TraverseOptions& o) {
  const std::size_t k = params.spec.latent_dim;
  if (o.dim >= k) {
    throw ContractError("traverse: dimension " + std::to_string(o.dim) + " out of range for latent size " +
                        std::to_string(k));
  }
  if (o.steps == 0 || o.rows == 0) throw ContractError("traverse: steps and rows must be positive");
  const std::size_t h = params.spec.image_h, w = params.spec.image_w;

  Tensor z({o.rows * o.steps, k});
  for (std::size_t r = 0; r < o.rows; ++r) {
    const Tensor base = r == 0 ? Tensor({1, k}) : standard_normal({1, k}, o.seed + r);
    for (std::size_t s = 0; s < o.steps; ++s) {
      const double value =
          o.steps == 1 ? 0.0 : -o.range + 2.0 * o.range * static_cast<double>(s) / static_cast<double>(o.steps - 1);
      for (std::size_t j = 0; j < k; ++j) z.at(r * o.steps + s, j) = j == o.dim ? value : base[j];
    }
  }

  ModelParams local = params;
  Tape tape;
  VaeGraph graph(tape, local, false, false);
  const Tensor probs = ops::sigmoid(graph.decode(tape.constant(z))).value();

  GrayImage img;
  img.height = o.rows * h;
  img.width = o.steps * w;
  img.pixels.resize(img.height * img.width);
  for (std::size_t r = 0; r < o.rows; ++r)
    for (std::size_t s = 0; s < o.steps; ++s) {
      const double* src = probs.ptr() + (r * o.steps + s) * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double v = std::clamp(src[y * w + x], 0.0, 1.0);
          img.pixels[(r * h + y) * img.width + s * w + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
  return img;
}

std::string encode_pgm(const GrayImage& image) {
  std::string out = fmt::format("P5\n{} {}\n255\n", image.width, image.height);
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pgm(const GrayImage& image, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_pgm(image);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed on " + path.string());
}

ComparisonTable collect_reports(const std::vector<fs::path>& dirs) {
  ComparisonTable t;
  for (const auto& dir : dirs) {
    try {
      t.rows.push_back({dir.string(), read_report(dir)});
    } catch (const std::exception&) {
      t.missing.push_back(dir.string());
    }
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const ReportEntry& a, const ReportEntry& b) {
    return variant_rank(a.report.variant) < variant_rank(b.report.variant);
  });
  return t;
}

std::string merged_csv(const ComparisonTable& table) {
  std::string out = "run," + report_csv_header() + "\n";
  for (const auto& e : table.rows) {
    std::string dir = e.dir;
    if (dir.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : dir) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      dir = quoted + "\"";
    }
    out += dir + "," + report_csv_row(e.report) + "\n";
  }
  return out;
}

std::string aligned_table(const ComparisonTable& table) {
  std::vector<std::array<std::string, 7>> cells;
  cells.push_back({"Model", "MIG", "Modularity", "JEMMIG", "Recon", "KL", "Run"});
  for (const auto& e : table.rows) {
    const auto& r = e.report;
    cells.push_back({row_label(r.variant), fmt::format("{:.4f}", r.mig),
                     r.modularity_defined ? fmt::format("{:.4f}", r.modularity) : "n/a", fmt::format("{:.4f}", r.jemmig),
                     fmt::format("{:.4f}", r.recon), fmt::format("{:.4f}", r.kl), e.dir});
  }
  std::array<std::size_t, 7> width{};
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += c == 0 || c == 6 ? fmt::format("{:<{}}", row[c], width[c]) : fmt::format("{:>{}}", row[c], width[c]);
      if (c + 1 < row.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace gcvae
