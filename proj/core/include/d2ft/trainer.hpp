// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Fine-tuning loop on a synthetic classification task. Each batch splits
// into micro-batches; the configured policy produces a schedule table per
// batch; only subnets on the full operation receive gradients and optimizer
// steps. Evaluation always runs the complete model.

#pragma once

#include <cstdint>
#include <vector>

#include "d2ft/baselines.hpp"
#include "d2ft/data.hpp"
#include "d2ft/model.hpp"
#include "d2ft/scheduler.hpp"
#include "d2ft/scoring.hpp"

namespace d2ft {

enum class PolicyKind {
  Standard,   // every cell p_f
  D2FT,       // bi-level knapsack on the pre-pass scores
  Random,     // uniform random cells under the same counts
  DPruningM,  // magnitude dynamic pruning
  DPruningMG, // magnitude selection with gradient-triggered refresh
  Scaler,     // single multiple-choice knapsack with scaled forward scores
};

const char* policy_name(PolicyKind p);
PolicyKind policy_from_name(const std::string& name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::D2FT;
  ScalerConfig scaler;        // Scaler only
  int refresh_interval = 16;  // pruning only
};

struct TrainConfig {
  int epochs = 5;
  double learning_rate = 0.05;
  double momentum = 0.9;  // in [0, 1)
  int batch_size = 20;
  int micro_batch_size = 4;  // 5 micro-batches per batch by default
  std::uint64_t seed = 3;
  PolicySpec policy;
  BudgetSpec budget;
  CostModel cost_model;
  Metric fwd_metric = Metric::FisherInformation;
  Metric bwd_metric = Metric::WeightMagnitude;
  int threads = 1;

  int micro_batches_per_batch() const { return batch_size / micro_batch_size; }
  void validate(int dataset_size) const;  // throws config errors
};

/// Class-conditional token sequences: per-class mean direction plus
/// elementwise Gaussian noise. Deterministic in seed; labels balanced.
struct SynthDatasetSpec {
  int num_samples = 200;
  int num_classes = 4;
  int token_dim = 16;  // must match the model dimension
  int seq_len = 8;
  double noise_level = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
};

Dataset make_synthetic_dataset(const SynthDatasetSpec& spec);
/// The exact per-class mean direction used by the generator (for tests).
std::vector<double> synthetic_class_mean(const SynthDatasetSpec& spec, int label);

/// v <- momentum * v + g;  p <- p - lr * v   (elementwise)
void sgd_momentum_step(Matrix& params, const Matrix& grads, Matrix& velocity, double lr,
                       double momentum);
/// Applies the step to every trainable tensor of the subnet.
void sgd_momentum_step(Subnet& params, const Subnet& grads, Subnet& velocity, double lr,
                       double momentum, bool lora_mode);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double top1 = 0.0;
  double compute_fraction = 0.0;  // realized, equals the scheduled fraction
  double comm_fraction = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// Runs fine-tuning under the configured policy. Scores are computed once
/// before training (no refresh); micro-batch units keep their dataset-index
/// identity across the between-epoch shuffle, so schedules and scores stay
/// aligned. Gradient accumulation and optimizer steps run in a fixed order.
TrainHistory train(SubnetModel& model, const Dataset& dataset, const TrainConfig& config);

/// Top-1 accuracy with every subnet active (no schedule at inference).
double evaluate(const SubnetModel& model, const Dataset& dataset);

}  // namespace d2ft
