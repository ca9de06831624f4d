#include <benchmark/benchmark.h>

#include <random>

#include "evoattack/ga.hpp"
#include "evoattack/metrics.hpp"
#include "evoattack/oracle.hpp"

using namespace evoattack;

namespace {

Perturbation random_pert(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(s.size());
  for (auto& x : v) x = u(rng);
  return Perturbation(s, std::move(v));
}

Shape square(std::int64_t side) {
  return {static_cast<std::size_t>(side), static_cast<std::size_t>(side), 3};
}

void BM_z_metric(benchmark::State& state) {
  const auto p = random_pert(square(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(z_metric(p, ZParams::machine()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.size()));
}

void BM_z_metric_serial(benchmark::State& state) {
  const auto p = random_pert(square(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(serial::z_metric(p, ZParams::machine()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.size()));
}

void BM_lp_report(benchmark::State& state) {
  const auto p = random_pert(square(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(lp_report(p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.size()));
}

void BM_lp_report_serial(benchmark::State& state) {
  const auto p = random_pert(square(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(serial::lp_report(p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.size()));
}

template <bool Parallel>
void evaluate(benchmark::State& state) {
  const Shape s{32, 32, 1};
  const bool binary = state.range(0) != 0;
  HalfBrightnessOracle oracle(s, 0.004, binary);
  const auto original = ImageTensor::filled(s, 0.5f);
  AttackConfig config;
  config.rng_seed = 1;
  if (binary) config.binary = BinarySettings{};
  std::vector<Individual> pop(config.population_size);
  for (std::size_t i = 0; i < pop.size(); ++i) pop[i].pert = random_pert(s, 10 + i);
  std::vector<Individual*> pending(pop.size());
  for (auto _ : state) {
    for (std::size_t i = 0; i < pop.size(); ++i) {
      pop[i].confidence.reset();
      pending[i] = &pop[i];
    }
    if constexpr (Parallel)
      benchmark::DoNotOptimize(evaluate_confidences(pending, original, oracle, config, 0));
    else
      benchmark::DoNotOptimize(serial::evaluate_confidences(pending, original, oracle, config, 0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pop.size()));
}

void BM_evaluate(benchmark::State& state) { evaluate<true>(state); }
void BM_evaluate_serial(benchmark::State& state) { evaluate<false>(state); }

}  // namespace

BENCHMARK(BM_z_metric)->Arg(32)->Arg(224);
BENCHMARK(BM_z_metric_serial)->Arg(32)->Arg(224);
BENCHMARK(BM_lp_report)->Arg(32)->Arg(224);
BENCHMARK(BM_lp_report_serial)->Arg(32)->Arg(224);
BENCHMARK(BM_evaluate)->Arg(0)->Arg(1)->ArgName("binary");
BENCHMARK(BM_evaluate_serial)->Arg(0)->Arg(1)->ArgName("binary");

BENCHMARK_MAIN();
