// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "d2ft/rng.hpp"
#include "d2ft/scheduler.hpp"

namespace {

using namespace d2ft;

ScoreTable make_scores(int devices, int n, std::uint64_t seed) {
  ScoreTable t;
  t.subnets = devices;
  t.micro_batches = n;
  t.forward.assign(static_cast<std::size_t>(devices), std::vector<double>(n));
  t.backward.assign(static_cast<std::size_t>(devices), std::vector<double>(n));
  auto rng = make_rng(seed, 0);
  for (int k = 0; k < devices; ++k) {
    for (int i = 0; i < n; ++i) {
      t.forward[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = uniform_double(rng) * 10;
      t.backward[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = uniform_double(rng) * 10;
    }
  }
  return t;
}

void BM_dp_search(benchmark::State& state) {
  const int devices = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  ScoreTable scores = make_scores(devices, n, 1);
  CostModel cm;
  CostTables w = build_cost_tables(cm, devices, n);
  std::vector<int> caps(static_cast<std::size_t>(devices), 3 * cm.full_cost(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dp_search(scores.backward, w.w_full, caps));
  }
}
BENCHMARK(BM_dp_search)->Args({4, 5})->Args({74, 5})->Args({74, 20})->Args({512, 20});

void BM_knapsack_schedule(benchmark::State& state) {
  const int devices = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  ScoreTable scores = make_scores(devices, n, 2);
  CostModel cm;
  BudgetSpec budget;
  budget.n_full = 2;
  budget.n_fwd = 2;
  Capacities caps = capacities_from_budget(budget, cm, devices, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(knapsack_schedule(scores, cm, caps));
  }
}
BENCHMARK(BM_knapsack_schedule)->Args({4, 5})->Args({74, 5})->Args({74, 20});

void BM_brute_force_schedule(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ScoreTable scores = make_scores(2, n, 3);
  CostModel cm;
  BudgetSpec budget;
  budget.n_full = 2;
  budget.n_fwd = 1;
  Capacities caps = capacities_from_budget(budget, cm, 2, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(brute_force_schedule(scores, cm, caps));
  }
}
BENCHMARK(BM_brute_force_schedule)->Arg(5)->Arg(8)->Arg(11);

void BM_scaler_schedule(benchmark::State& state) {
  const int devices = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  ScoreTable scores = make_scores(devices, n, 4);
  CostModel cm;
  std::vector<int> caps(static_cast<std::size_t>(devices), 14);
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaler_schedule(scores, cm, caps, ScalerConfig::max()));
  }
}
BENCHMARK(BM_scaler_schedule)->Args({4, 5})->Args({74, 5});

}  // namespace

BENCHMARK_MAIN();
