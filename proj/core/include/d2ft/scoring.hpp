// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-subnet, per-micro-batch contribution scores. A single pre-pass feeds
// every micro-batch forward and backward with no weight update and records
// the chosen metric pair; schedules consume the resulting table.

#pragma once

#include <string>
#include <vector>

#include "d2ft/data.hpp"
#include "d2ft/model.hpp"

namespace d2ft {

enum class Metric {
  FisherInformation,  // sum of squared gradient entries
  WeightMagnitude,    // sum of |w| (sample-independent)
  GradientMagnitude,  // sum of |g|
  TaylorImportance,   // sum of |w * g| elementwise
};

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);  // throws config error

/// Forward and backward contribution scores, K scheduled subnets x N
/// micro-batches, with the metric provenance that produced each side.
struct ScoreTable {
  int subnets = 0;
  int micro_batches = 0;
  Metric fwd_metric = Metric::FisherInformation;
  Metric bwd_metric = Metric::WeightMagnitude;
  std::vector<std::vector<double>> forward;   // K x N
  std::vector<std::vector<double>> backward;  // K x N

  double fwd(int k, int i) const { return forward[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]; }
  double bwd(int k, int i) const { return backward[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]; }
  void validate() const;  // dims, finiteness, nonnegativity
};

/// Sum of squared gradient entries over the subnet's trainable parameters.
double fisher_score(const Subnet& grads, bool lora_mode);
/// Sum of absolute parameter values over the subnet's trainable parameters.
double weight_magnitude(const Subnet& weights, bool lora_mode);
double gradient_magnitude(const Subnet& grads, bool lora_mode);
double taylor_importance(const Subnet& weights, const Subnet& grads, bool lora_mode);

double metric_value(Metric m, const Subnet& weights, const Subnet& grads, bool lora_mode);

/// Runs the scoring pre-pass: every micro-batch forward+backward with all
/// subnets on the full operation and no optimizer step. Model parameters are
/// bitwise unchanged afterwards. Micro-batches may be scored in parallel;
/// the table is assembled in unit-index order.
ScoreTable prepass_scores(const SubnetModel& model, const Dataset& dataset, int micro_batch_size,
                          Metric fwd_metric, Metric bwd_metric, int threads = 1);

}  // namespace d2ft
