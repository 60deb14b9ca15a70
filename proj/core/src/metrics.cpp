#include "gcvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gcvae/errors.hpp"

namespace gcvae::metrics {
namespace {

// Maps arbitrary non-negative labels to counts indexed by label.
std::vector<std::size_t> histogram(std::span<const int> a) {
  int hi = 0;
  for (int v : a) {
    if (v < 0) throw ContractError("negative discrete label " + std::to_string(v));
    hi = std::max(hi, v);
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(hi) + 1, 0);
  for (int v : a) ++counts[static_cast<std::size_t>(v)];
  return counts;
}

struct Joint {
  std::vector<std::size_t> a_counts, b_counts, ab_counts;
  std::size_t b_width = 0;
};

Joint joint_histogram(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw ShapeError("discrete columns differ in length: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  Joint j;
  j.a_counts = histogram(a);
  j.b_counts = histogram(b);
  j.b_width = j.b_counts.size();
  j.ab_counts.assign(j.a_counts.size() * j.b_width, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++j.ab_counts[static_cast<std::size_t>(a[i]) * j.b_width + static_cast<std::size_t>(b[i])];
  }
  return j;
}

double entropy_of_counts(const std::vector<std::size_t>& counts, std::size_t n) {
  double h = 0.0;
  const double total = static_cast<double>(n);
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

// Indices of the largest and second-largest values; ties resolve to the lower index.
std::pair<std::size_t, std::size_t> top_two(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t x, std::size_t y) { return v[x] > v[y]; });
  return {idx[0], idx.size() > 1 ? idx[1] : idx[0]};
}

void require_rows(const std::vector<Column>& codes, const FactorTable& factors) {
  if (codes.empty()) throw ContractError("no code columns");
  if (factors.num_factors() == 0) throw ContractError("factor table has no factors");
  for (const Column& c : codes) {
    if (c.size() != factors.n) {
      throw ShapeError("code column has " + std::to_string(c.size()) + " rows, factor table has " +
                       std::to_string(factors.n));
    }
  }
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Column FactorTable::column(std::size_t k) const {
  if (k >= num_factors()) throw ContractError("factor index " + std::to_string(k) + " out of range");
  Column c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = at(i, k);
  return c;
}

FactorTable FactorTable::select(std::span<const std::size_t> rows) const {
  FactorTable out;
  out.n = rows.size();
  out.cardinalities = cardinalities;
  out.values.reserve(rows.size() * num_factors());
  for (std::size_t r : rows) {
    if (r >= n) throw ContractError("factor row " + std::to_string(r) + " out of range");
    for (std::size_t k = 0; k < num_factors(); ++k) out.values.push_back(at(r, k));
  }
  return out;
}

void FactorTable::validate() const {
  if (values.size() != n * num_factors()) {
    throw ValidationError("factor table holds " + std::to_string(values.size()) + " values for " + std::to_string(n) +
                          " rows of " + std::to_string(num_factors()) + " factors");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < num_factors(); ++k) {
      const int v = at(i, k);
      if (v < 0 || v >= cardinalities[k]) {
        throw ValidationError("factor " + std::to_string(k) + " of row " + std::to_string(i) + " is " +
                              std::to_string(v) + ", outside [0," + std::to_string(cardinalities[k]) + ")");
      }
    }
}

std::vector<Column> discretize(const Tensor& codes, int bins) {
  if (codes.rank() != 2) throw ShapeError("discretize: codes must be [n,k], got " + shape_str(codes.shape()));
  if (bins < 2) throw ContractError("discretize: need at least 2 bins");
  const std::size_t n = codes.dim(0), k = codes.dim(1);
  std::vector<Column> out(k, Column(n, 0));
  for (std::size_t j = 0; j < k; ++j) {
    double lo = codes.at(0, j), hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, codes.at(i, j));
      hi = std::max(hi, codes.at(i, j));
    }
    if (!(hi > lo)) continue;
    const double span = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = static_cast<int>(std::floor((codes.at(i, j) - lo) / span * bins));
      out[j][i] = std::clamp(b, 0, bins - 1);
    }
  }
  return out;
}

double entropy(std::span<const int> a) {
  if (a.empty()) return 0.0;
  return entropy_of_counts(histogram(a), a.size());
}

double joint_entropy(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) return 0.0;
  return entropy_of_counts(joint_histogram(a, b).ab_counts, a.size());
}

double mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) return 0.0;
  const Joint j = joint_histogram(a, b);
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (std::size_t u = 0; u < j.a_counts.size(); ++u) {
    for (std::size_t v = 0; v < j.b_width; ++v) {
      const std::size_t c = j.ab_counts[u * j.b_width + v];
      if (c == 0) continue;
      const double p = static_cast<double>(c) / n;
      mi += p * std::log(static_cast<double>(c) * n /
                         (static_cast<double>(j.a_counts[u]) * static_cast<double>(j.b_counts[v])));
    }
  }
  return std::max(mi, 0.0);
}

std::vector<std::vector<double>> mi_matrix(const std::vector<Column>& codes, const FactorTable& factors) {
  require_rows(codes, factors);
  std::vector<Column> ys;
  for (std::size_t k = 0; k < factors.num_factors(); ++k) ys.push_back(factors.column(k));
  std::vector<std::vector<double>> m(codes.size(), std::vector<double>(ys.size()));
  for (std::size_t j = 0; j < codes.size(); ++j)
    for (std::size_t k = 0; k < ys.size(); ++k) m[j][k] = mutual_information(codes[j], ys[k]);
  return m;
}

Scores mig(const std::vector<Column>& codes, const FactorTable& factors, MigNormalization norm) {
  const auto m = mi_matrix(codes, factors);
  Scores s;
  for (std::size_t k = 0; k < factors.num_factors(); ++k) {
    std::vector<double> info(codes.size());
    for (std::size_t j = 0; j < codes.size(); ++j) info[j] = m[j][k];
    const auto [first, second] = top_two(info);
    const double gap = info[first] - (codes.size() > 1 ? info[second] : 0.0);
    const double denom = norm == MigNormalization::code_sum ? std::accumulate(info.begin(), info.end(), 0.0)
                                                            : entropy(factors.column(k));
    s.per_item.push_back(denom > 0.0 ? std::clamp(gap / denom, 0.0, 1.0) : 0.0);
  }
  s.mean = mean_of(s.per_item);
  return s;
}

Scores jemmig(const std::vector<Column>& codes, const FactorTable& factors, int bins) {
  if (bins < 2) throw ContractError("jemmig: need at least 2 bins");
  const auto m = mi_matrix(codes, factors);
  Scores s;
  for (std::size_t k = 0; k < factors.num_factors(); ++k) {
    const Column y = factors.column(k);
    std::vector<double> info(codes.size());
    for (std::size_t j = 0; j < codes.size(); ++j) info[j] = m[j][k];
    const auto [first, second] = top_two(info);
    const double runner_up = codes.size() > 1 ? info[second] : 0.0;
    const double raw = joint_entropy(y, codes[first]) - info[first] + runner_up;
    const double normalizer = entropy(y) + std::log(static_cast<double>(bins));
    s.per_item.push_back(std::clamp(1.0 - raw / normalizer, 0.0, 1.0));
  }
  s.mean = mean_of(s.per_item);
  return s;
}

Scores modularity(const std::vector<Column>& codes, const FactorTable& factors) {
  const auto m = mi_matrix(codes, factors);
  const std::size_t num_factors = factors.num_factors();
  Scores s;
  for (const auto& row : m) {
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double theta = row[best];
    if (!(theta > 0.0)) continue;
    if (num_factors == 1) {
      s.per_item.push_back(1.0);
      continue;
    }
    double off = 0.0;
    for (std::size_t k = 0; k < num_factors; ++k) {
      if (k != best) off += row[k] * row[k];
    }
    s.per_item.push_back(std::clamp(1.0 - off / (theta * theta * static_cast<double>(num_factors - 1)), 0.0, 1.0));
  }
  if (s.per_item.empty()) throw UndefinedScore("modularity: no code carries information about any factor");
  s.mean = mean_of(s.per_item);
  return s;
}

Report evaluate(const Tensor& codes, const FactorTable& factors, int bins, MigNormalization norm) {
  const auto columns = discretize(codes, bins);
  Report r;
  r.mig = mig(columns, factors, norm);
  r.jemmig = jemmig(columns, factors, bins);
  try {
    r.modularity = modularity(columns, factors);
  } catch (const UndefinedScore&) {
    r.modularity_defined = false;
    r.modularity.mean = 0.0;
  }
  return r;
}

}  // namespace gcvae::metrics
