#include <benchmark/benchmark.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gcvae/config.hpp"
#include "gcvae/divergences.hpp"
#include "gcvae/model.hpp"
#include "gcvae/ops.hpp"
#include "gcvae/train.hpp"

namespace {

using namespace gcvae;
using namespace gcvae::ops;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = standard_normal({n, n}, 1), b = standard_normal({n, n}, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

// forward and backward of one stride-2 encoder layer at batch 64
void BM_Conv2dStep(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor x = standard_normal({64, 32, side, side}, 3);
  const Tensor w = standard_normal({32, 32, 4, 4}, 4);
  for (auto _ : state) {
    Tape tape;
    const Var wv = tape.parameter(w);
    const Var y = conv2d(tape.constant(x), wv, 2, 1);
    benchmark::DoNotOptimize(tape.backward(reduce_sum(y)));
  }
}
BENCHMARK(BM_Conv2dStep)->Arg(16)->Arg(32);

void BM_Divergence(benchmark::State& state) {
  const auto kind = static_cast<divergences::Kind>(state.range(0));
  const Tensor zq = standard_normal({64, 10}, 5), zp = standard_normal({64, 10}, 6);
  divergences::Params p;
  p.kind = kind;
  for (auto _ : state) {
    Tape tape;
    const Var q = tape.parameter(zq);
    benchmark::DoNotOptimize(tape.backward(divergences::divergence(p, q, tape.constant(zp))));
  }
}
BENCHMARK(BM_Divergence)->Arg(0)->Arg(1)->Arg(2);

void BM_TrainStep(benchmark::State& state) {
  RunConfig c;
  c.arch = state.range(0) == 0 ? "mlp" : "conv64";
  c.variant = "gcvae2";
  const auto ds = data::synth_sprites(c.batch_size, 0);
  ModelSpec spec;
  spec.arch = parse_arch(c.arch);
  spec.latent_dim = c.latent_dim;
  ModelParams params = init_params(spec, 0);
  const auto variant = objective::variant_reduction(c.variant, c.variant_defaults());
  const auto div = c.divergence_params(*variant.divergence);
  std::vector<std::size_t> rows(c.batch_size);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Tensor x = ds.images(rows);
  const Tensor prior = standard_normal({c.batch_size, c.latent_dim}, 7);
  const WeightRule fixed = [](double, double, double) { return control::WeightTriple{0.2, 0.3, 0.5}; };
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients(params, variant, div, x, ++seed, prior, fixed));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
