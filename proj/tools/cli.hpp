// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line pipeline: partition | score | schedule | simulate | train |
// report. Every run is fully determined by a JSON config (seeds are
// mandatory) and writes its artifacts plus a resolved-config snapshot into
// the output directory.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "d2ft/cost_sim.hpp"
#include "d2ft/model.hpp"
#include "d2ft/scheduler.hpp"
#include "d2ft/scoring.hpp"
#include "d2ft/trainer.hpp"

namespace d2ft::cli {

// exit codes, one per error category
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitInternal = 5;

enum class ScheduleMethod { Standard, D2ft, Random, DPruningM, DPruningMG, Scaler, BruteForce };

struct HeteroConfig {
  enum class Mode { None, Memory, Compute };
  Mode mode = Mode::None;
  int count = 0;
};

/// Parsed and validated run configuration; fully determines a run.
struct RunConfig {
  ModelConfig model;
  SynthDatasetSpec dataset;
  Metric fwd_metric = Metric::FisherInformation;
  Metric bwd_metric = Metric::WeightMagnitude;
  BudgetSpec budget;
  CostModel cost_model;
  ScheduleMethod method = ScheduleMethod::D2ft;
  ScalerConfig scaler;
  int refresh_interval = 16;
  bool lora = false;
  int lora_rank = 4;
  double lora_scaling = 1.0;
  TrainConfig train;
  HeteroConfig hetero;
  std::vector<std::uint64_t> seeds;  // per-run seeds for cmd_train
  std::string output_dir = "out";

  /// Trainer policy corresponding to `method` (BruteForce is schedule-only).
  PolicyKind train_policy() const;
};

RunConfig load_run_config(const std::string& path);
std::string resolved_config_json(const RunConfig& cfg);

/// Entry point used by main() and by the tests; returns an exit code and
/// never throws.
int run(int argc, const char* const* argv);

}  // namespace d2ft::cli
