#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "nback/agents.hpp"
#include "nback/runner.hpp"
#include "nback/scoring.hpp"
#include "nback/stats.hpp"
#include "nback/task.hpp"

namespace {

nback::TaskConfig config_for(nback::Family family, nback::Variant variant) {
  nback::TaskConfig cfg;
  cfg.family = family;
  cfg.variant = variant;
  cfg.n = 3;
  cfg.seed = 42;
  return cfg;
}

void BM_GenerateVerbalNoise(benchmark::State& state) {
  const auto cfg = config_for(nback::Family::kVerbal, nback::Variant::kNoise);
  std::size_t block = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nback::generate_block(cfg, block++ % 50));
  }
}
BENCHMARK(BM_GenerateVerbalNoise);

void BM_GenerateSpatialAbstract(benchmark::State& state) {
  const auto cfg =
      config_for(nback::Family::kSpatial, nback::Variant::kAbstractExclIdentical);
  std::size_t block = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nback::generate_block(cfg, block++ % 50));
  }
}
BENCHMARK(BM_GenerateSpatialAbstract);

void BM_KruskalWallis(benchmark::State& state) {
  const auto per_group = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> groups(3, std::vector<double>(per_group));
  for (auto& g : groups) {
    for (auto& x : g) x = z(gen);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(nback::kruskal_wallis(groups));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KruskalWallis)->Range(50, 50 << 6)->Complexity();

void BM_InverseNormalCdf(benchmark::State& state) {
  double p = 0.0005;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nback::inverse_normal_cdf(p));
    p = p > 0.999 ? 0.0005 : p + 0.001;
  }
}
BENCHMARK(BM_InverseNormalCdf);

void BM_RunBlockPerfectAgent(benchmark::State& state) {
  const auto cfg = config_for(nback::Family::kSpatial, nback::Variant::kNoise);
  const nback::Block block = nback::generate_block(cfg, 0);
  const nback::AgentSpec spec;
  nback::AgentContext ctx;
  ctx.config = cfg;
  const auto meta = nback::metadata_for(spec);
  nback::RunBlockOptions opts;
  opts.experiment = "bench";
  for (auto _ : state) {
    auto agent = nback::make_agent(spec, ctx);
    benchmark::DoNotOptimize(nback::run_block(block, *agent, meta, opts));
  }
}
BENCHMARK(BM_RunBlockPerfectAgent);

}  // namespace
BENCHMARK_MAIN();
