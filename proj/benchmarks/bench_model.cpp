// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "d2ft/model.hpp"
#include "d2ft/rng.hpp"

namespace {

using namespace d2ft;

ModelConfig bench_config(int blocks, int heads, int dim) {
  ModelConfig cfg;
  cfg.num_blocks = blocks;
  cfg.heads_per_block = heads;
  cfg.model_dim = dim;
  cfg.ffn_hidden = 2 * dim;
  cfg.seq_len = 16;
  cfg.num_classes = 10;
  cfg.seed = 1;
  return cfg;
}

Matrix bench_input(const ModelConfig& cfg) {
  auto rng = make_rng(7, 0);
  Matrix x(cfg.seq_len, cfg.model_dim);
  for (double& v : x.data) v = gaussian(rng);
  return x;
}

void BM_forward_backward_all_full(benchmark::State& state) {
  ModelConfig cfg = bench_config(static_cast<int>(state.range(0)),
                                 static_cast<int>(state.range(1)),
                                 static_cast<int>(state.range(2)));
  SubnetModel model(cfg);
  std::vector<Matrix> inputs = {bench_input(cfg)};
  std::vector<int> labels = {1};
  std::vector<OperationKind> column(static_cast<std::size_t>(model.scheduled_count()),
                                    OperationKind::Full);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward_backward(inputs, labels, column));
  }
}
BENCHMARK(BM_forward_backward_all_full)->Args({2, 2, 16})->Args({4, 4, 32})->Args({6, 6, 48});

void BM_forward_backward_half_shortcut(benchmark::State& state) {
  ModelConfig cfg = bench_config(4, 4, 32);
  SubnetModel model(cfg);
  std::vector<Matrix> inputs = {bench_input(cfg)};
  std::vector<int> labels = {1};
  std::vector<OperationKind> column(static_cast<std::size_t>(model.scheduled_count()),
                                    OperationKind::Full);
  for (std::size_t r = 0; r < column.size(); r += 2) column[r] = OperationKind::Shortcut;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward_backward(inputs, labels, column));
  }
}
BENCHMARK(BM_forward_backward_half_shortcut);

void BM_inference_logits(benchmark::State& state) {
  ModelConfig cfg = bench_config(4, 4, 32);
  SubnetModel model(cfg);
  Matrix x = bench_input(cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.logits(x));
  }
}
BENCHMARK(BM_inference_logits);

}  // namespace
