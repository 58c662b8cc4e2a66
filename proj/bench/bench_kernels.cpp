// Serial reference vs OpenMP kernel on the reference campaign.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include "nnmut/campaign.hpp"
#include "nnmut/parallel.hpp"

using namespace nnmut;

namespace {

struct Fixture {
  CampaignConfig cfg = reference_config();
  Dataset data = make_dataset(cfg);
  Network net = run_train(cfg, data).network;
  PoolResult pool = generate_pool(net, data, cfg.mutation.pool_config());
  std::vector<Network> nets = networks_of(pool.pool);
  std::vector<std::size_t> ids = ids_of(pool.pool);
  std::vector<std::vector<double>> samples = rows_of(data, Split::train);
  SprtConfig sprt = resolve_sprt(cfg, net, nets, data);
  double baseline = accuracy(net, data, Split::val);
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

void BM_KillMatrix_Serial(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(serial::kill_matrix(f.net, f.nets, f.ids, f.data, Split::test));
}
void BM_KillMatrix_Parallel(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(kill_matrix(f.net, f.nets, f.ids, f.data, Split::test));
}

void BM_BatchLcr_Serial(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(serial::batch_lcr(f.samples, f.net, f.nets));
}
void BM_BatchLcr_Parallel(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(batch_lcr(f.samples, f.net, f.nets));
}

void BM_BatchDetect_Serial(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(serial::batch_detect(f.samples, f.net, f.nets, f.sprt));
}
void BM_BatchDetect_Parallel(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(batch_detect(f.samples, f.net, f.nets, f.sprt));
}

void BM_GeneratePool_Serial(benchmark::State& state) {
  const auto& f = fx();
  const auto config = f.cfg.mutation.pool_config();
  for (auto _ : state) benchmark::DoNotOptimize(serial::generate_pool(f.net, f.data, config));
}
void BM_GeneratePool_Parallel(benchmark::State& state) {
  const auto& f = fx();
  const auto config = f.cfg.mutation.pool_config();
  for (auto _ : state) benchmark::DoNotOptimize(generate_pool(f.net, f.data, config));
}

void BM_ExtractFeatures_Serial(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(serial::extract_all(f.pool.pool, f.net, f.baseline));
}
void BM_ExtractFeatures_Parallel(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(extract_all(f.pool.pool, f.net, f.baseline));
}

}  // namespace

BENCHMARK(BM_KillMatrix_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KillMatrix_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchLcr_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchLcr_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchDetect_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchDetect_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GeneratePool_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GeneratePool_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExtractFeatures_Serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ExtractFeatures_Parallel)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
