// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Comparison schedulers run under the same budgets as the knapsack
// scheduler: uniform random assignment per subnet, and dynamic pruning that
// runs whole subnets either fully or not at all (no forward-only option).

#pragma once

#include <cstdint>
#include <vector>

#include "d2ft/model.hpp"
#include "d2ft/scheduler.hpp"

namespace d2ft {

struct BaselineKind {
  enum class Type { Random, DPruningM, DPruningMG };
  Type type = Type::Random;
  std::uint64_t seed = 0;     // Random only
  int refresh_interval = 16;  // pruning variants

  static BaselineKind random(std::uint64_t seed) { return {Type::Random, seed, 16}; }
  static BaselineKind dpruning_m(int interval = 16) { return {Type::DPruningM, 0, interval}; }
  static BaselineKind dpruning_mg(int interval = 16) { return {Type::DPruningMG, 0, interval}; }

  void validate() const;
};

/// Uniformly random assignment with exactly n_full p_f cells and n_fwd p_o
/// cells per device row; everything else p_s. Deterministic in (seed, row),
/// so the table is independent of evaluation order.
ScheduleTable random_schedule(const BudgetSpec& budget, int devices, int micro_batches,
                              std::uint64_t seed);

/// Weight-magnitude ranking of the scheduled block subnets.
std::vector<double> block_weight_magnitudes(const SubnetModel& model);

/// Pruning-style schedule: devices are ranked by `ranking` (descending,
/// ties by lower index) and filled with all-micro-batch p_f rows until the
/// compute budget implied by `budget` runs out; the boundary device gets its
/// leading micro-batches. Never emits p_o.
ScheduleTable pruning_schedule_from_ranking(const std::vector<double>& ranking,
                                            const BudgetSpec& budget,
                                            const CostModel& cost_model, int micro_batches);

/// Stateful dynamic-pruning policy. The subnet selection is recomputed from
/// current weight magnitudes only at refresh boundaries (every
/// refresh_interval iterations). The M/G variant additionally keeps the old
/// selection at a boundary unless the gradient-magnitude ranking order
/// changed since the previous refresh.
class DynamicPruningPolicy {
 public:
  explicit DynamicPruningPolicy(BaselineKind kind);

  /// grad_magnitudes: per-subnet gradient magnitude totals from the most
  /// recent step (M/G refresh trigger); ignored by the M variant.
  ScheduleTable schedule(const SubnetModel& model, const std::vector<double>& grad_magnitudes,
                         const BudgetSpec& budget, const CostModel& cost_model,
                         int micro_batches, int iteration);

 private:
  BaselineKind kind_;
  std::vector<double> cached_ranking_;
  std::vector<int> last_grad_order_;
  bool initialized_ = false;
};

}  // namespace d2ft
