// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Operation scheduling. Each (device, micro-batch) cell gets one operation
// code; the bi-level solver runs one 0/1 knapsack per device over backward
// scores for full operations, a second over forward scores for forward-only
// operations, and merges the two selections into the final table.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "d2ft/model.hpp"
#include "d2ft/scoring.hpp"

namespace d2ft {

/// Integer cost units per micro-batch. Defaults encode the measured 40/60
/// forward/backward split: a forward pass costs 2 of the 5 units of a full
/// pass. Communication units are symmetric between forward and backward.
struct CostModel {
  int forward_cost = 2;   // c^f
  int backward_cost = 3;  // c^b
  int comm_forward = 1;
  int comm_backward = 1;
  // optional per-device overrides (heterogeneous costs); empty = uniform
  std::vector<int> forward_cost_per_device;
  std::vector<int> backward_cost_per_device;

  int cf(int device) const {
    return forward_cost_per_device.empty() ? forward_cost
                                           : forward_cost_per_device.at(static_cast<std::size_t>(device));
  }
  int cb(int device) const {
    return backward_cost_per_device.empty() ? backward_cost
                                            : backward_cost_per_device.at(static_cast<std::size_t>(device));
  }
  int full_cost(int device) const { return cf(device) + cb(device); }
  /// Compute units of one schedule code on one device.
  int op_cost(int device, std::uint8_t code) const;

  void validate() const;

  static CostModel full_finetune() { return CostModel{}; }
  /// LoRA steps are forward-heavy: the backward over adapters is ~1/7 of the
  /// forward cost, so a forward-only pass is 7/8 of a full step.
  static CostModel lora_finetune() {
    CostModel m;
    m.forward_cost = 7;
    m.backward_cost = 1;
    return m;
  }
};

/// Per-device operation capacities: `full` bounds the cost of full
/// operations (weight c^f + c^b), `fwd` bounds forward-only operations
/// (weight c^f). The two pools are separate, mirroring the bi-level solver.
struct Capacities {
  std::vector<int> full;
  std::vector<int> fwd;

  int devices() const { return static_cast<int>(full.size()); }
  void validate() const;
};

/// Budget expressed as per-batch micro-batch counts: n_full cells run the
/// full operation and n_fwd additional cells run forward-only, per device.
struct BudgetSpec {
  int n_full = 2;
  int n_fwd = 2;
  struct Override {
    int device = 0;
    int n_full = 0;
    int n_fwd = 0;
  };
  std::vector<Override> overrides;

  int n_full_for(int device) const;
  int n_fwd_for(int device) const;
  void validate(int micro_batches) const;
};

/// K x N table of operation codes: 1 = p_f, 2 = p_o, 3 = p_s.
struct ScheduleTable {
  int devices = 0;
  int micro_batches = 0;
  std::vector<std::uint8_t> codes;

  ScheduleTable() = default;
  ScheduleTable(int k, int n)
      : devices(k), micro_batches(n),
        codes(static_cast<std::size_t>(k) * static_cast<std::size_t>(n),
              static_cast<std::uint8_t>(3)) {}

  std::uint8_t code(int k, int i) const {
    return codes[static_cast<std::size_t>(k) * micro_batches + i];
  }
  void set_code(int k, int i, std::uint8_t c) {
    codes[static_cast<std::size_t>(k) * micro_batches + i] = c;
  }
  OperationKind op(int k, int i) const { return static_cast<OperationKind>(code(k, i)); }
  /// Operations of micro-batch column i, one per device row.
  std::vector<OperationKind> column(int i) const;

  struct Counts {
    int n_full = 0;
    int n_fwd = 0;
    int n_shortcut = 0;
  };
  Counts row_counts(int k) const;

  void validate() const;  // dims and code range
  bool operator==(const ScheduleTable&) const = default;
};

struct ScalerConfig {
  enum class Mode { Max, Min, Constant };
  Mode mode = Mode::Constant;
  double lambda = 1.0;  // Constant mode only; must be > 0

  void validate() const;
  static ScalerConfig max() { return {Mode::Max, 1.0}; }
  static ScalerConfig min() { return {Mode::Min, 1.0}; }
  static ScalerConfig constant(double l) { return {Mode::Constant, l}; }
};

/// Cost tables for the two knapsack passes: W_b[k][i] = c^f_k + c^b_k (full
/// operation), W_f[k][i] = c^f_k (forward-only).
struct CostTables {
  std::vector<std::vector<int>> w_full;  // W_b
  std::vector<std::vector<int>> w_fwd;   // W_f
};
CostTables build_cost_tables(const CostModel& cost_model, int devices, int micro_batches);

/// Independent 0/1 knapsacks, one per device row: maximize the sum of
/// selected scores subject to the row's weight budget. Phase 1 fills the DP
/// table; phase 2 backtracks one optimal subset. Ties prefer not selecting,
/// which leaves the lowest-indexed items selected under constant scores.
struct DpResult {
  std::vector<std::vector<std::uint8_t>> selection;  // K x N, 0/1
  std::vector<double> objective;                     // per device
};
DpResult dp_search(const std::vector<std::vector<double>>& scores,
                   const std::vector<std::vector<int>>& weights,
                   const std::vector<int>& capacities, int threads = 1);

/// Cell-wise merge of the two knapsack selections: both -> p_f (1), full
/// only -> p_f (1), forward only -> p_o (2), neither -> p_s (3).
ScheduleTable merge_selections(const std::vector<std::vector<std::uint8_t>>& full_selection,
                               const std::vector<std::vector<std::uint8_t>>& fwd_selection);

/// Bi-level schedule: full-operation knapsack on backward scores under the
/// full capacity, forward-only knapsack on forward scores under the forward
/// capacity, then merge_selections.
ScheduleTable knapsack_schedule(const ScoreTable& scores, const CostModel& cost_model,
                                const Capacities& capacities, int threads = 1);

/// Exhaustive per-device optimum of the single-budget sub-problem
/// (capacity = full + fwd pools combined). Enumeration bound: N <= 14.
ScheduleTable brute_force_schedule(const ScoreTable& scores, const CostModel& cost_model,
                                   const Capacities& capacities, int threads = 1);

/// Per-device objective realized by a schedule. A p_f cell performs the
/// forward pass too, so it earns both of its contributions: value(p_f) =
/// A^pf + A^po, value(p_o) = A^po, value(p_s) = 0.
std::vector<double> schedule_objective(const ScheduleTable& table, const ScoreTable& scores);

/// Single-knapsack alternative: per micro-batch, choose exactly one of
/// {p_f: value A^pf, weight c^f+c^b}, {p_o: value lambda * A^po, weight c^f},
/// {p_s: value 0, weight 0} under one total capacity per device
/// (multiple-choice knapsack). lambda comes from the scaler mode; Max forces
/// every scaled forward score strictly below the smallest positive backward
/// score, Min forces every backward score below the smallest positive scaled
/// forward score.
struct ScalerResult {
  ScheduleTable table;
  double lambda_used = 1.0;
  bool fell_back = false;  // degenerate scores forced lambda = 1
};
ScalerResult scaler_schedule(const ScoreTable& scores, const CostModel& cost_model,
                             const std::vector<int>& total_capacity, const ScalerConfig& scaler,
                             int threads = 1);

/// cap_full_k = n_full * (c^f_k + c^b_k), cap_fwd_k = n_fwd * c^f_k.
Capacities capacities_from_budget(const BudgetSpec& budget, const CostModel& cost_model,
                                  int devices, int micro_batches);

/// Total compute units consumed by one device row.
int row_cost_units(const ScheduleTable& table, const CostModel& cost_model, int device);

/// Strict shared-budget validation: reports every device whose post-merge
/// cost exceeds its combined pool (full + fwd). The bi-level solver cannot
/// produce violations; external tables can.
struct SharedBudgetReport {
  struct Entry {
    int device = 0;
    int cost_units = 0;
    int limit = 0;
  };
  std::vector<Entry> devices;
  std::vector<int> violations;  // device indices over their limit
  bool ok() const { return violations.empty(); }
};
SharedBudgetReport check_shared_budget(const ScheduleTable& table, const CostModel& cost_model,
                                       const Capacities& capacities);

}  // namespace d2ft
