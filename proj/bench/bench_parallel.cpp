#include <benchmark/benchmark.h>

#include <vector>

#include "sepunmix/basin.hpp"
#include "sepunmix/coherence.hpp"
#include "sepunmix/geometry.hpp"
#include "sepunmix/psf.hpp"

using namespace sepunmix;

namespace {

const std::vector<double> kDeltas = {2e-3, 5e-3, 1e-2};

std::shared_ptr<const Kernel> bench_kernel() {
  static const auto k = make_kernel(KernelSpec{});
  return k;
}

void BM_CoherenceReference(benchmark::State& state) {
  const auto grid = SamplingGrid::uniform(static_cast<int>(state.range(0)), 1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::coherence_profile(*bench_kernel(), kDeltas, grid, 8));
}

void BM_CoherenceParallel(benchmark::State& state) {
  const auto grid = SamplingGrid::uniform(static_cast<int>(state.range(0)), 1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(coherence_profile(*bench_kernel(), kDeltas, grid, 8));
}

void run_basin(benchmark::State& state, bool parallel) {
  const auto grid = SamplingGrid::uniform(1000, 1.0);
  Rng rng(7);
  const auto support = sample_support(2, 1, 5e-3, 1.0, rng);
  const auto model = build_psf_model(bench_kernel(), support, grid);
  const Theta star{model->feasible().center(), VectorXd::Ones(2)};
  const VectorXd z = model->evaluate(star.x) * star.y;
  const SpectralConstants sigma = spectral_constants_psf(*model, 16);
  BasinOptions opts;
  opts.radii = geometric_ladder(1e-3, 1e-1, 4);
  opts.samples_per_radius = 25;
  opts.seed = 11;
  opts.parallel = parallel;
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo_basin(*model, z, star, sigma, opts));
}

void BM_BasinSerial(benchmark::State& state) { run_basin(state, false); }
void BM_BasinParallel(benchmark::State& state) { run_basin(state, true); }

}  // namespace

BENCHMARK(BM_CoherenceReference)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CoherenceParallel)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BasinSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BasinParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
