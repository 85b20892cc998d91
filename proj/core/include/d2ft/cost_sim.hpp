// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Cost accounting and the device simulator: compute/communication fractions
// relative to full fine-tuning, workload variance across devices, and
// simulated per-batch busy times from a calibrated unit-timing table. All
// times are simulated, never wall-clock.

#pragma once

#include <string>
#include <vector>

#include "d2ft/scheduler.hpp"

namespace d2ft {

struct TimingEntry {
  int count = 0;        // micro-batches processed
  double full_ms = 0.0; // full operation
  double fwd_ms = 0.0;  // forward-only
};

/// Default unit-execution timing for one subnet processing 1..5 micro-batches.
std::vector<TimingEntry> default_timing_table();

struct DeviceProfile {
  enum class Speed { Slow, Fast };

  int device_id = 0;
  int memory_units = 1;  // subnet rows hosted by this device
  Speed speed_class = Speed::Slow;
  std::vector<TimingEntry> timing_table;  // sorted by count, nonempty

  static DeviceProfile standard(int id);
  void validate() const;  // memory_units >= 1, table monotone
  /// Busy milliseconds for `count` micro-batches; exact at table entries,
  /// linear between them (with an implicit (0, 0 ms) anchor), and linear
  /// extrapolation of the last segment beyond the table.
  double time_ms(int count, bool full) const;
};

struct BatchMetrics {
  double compute_fraction = 0.0;    // in [0, 1]
  double comm_fraction = 0.0;       // in [0, 1]
  double workload_variance = 0.0;   // population variance of normalized loads
  double makespan_ms = 0.0;
  std::vector<double> per_device_busy_ms;
  double imbalance_residual = 0.0;  // || load_k - C_k || over devices, cost units
};

/// Fraction of full fine-tuning compute: cost(p_f) = c^f + c^b,
/// cost(p_o) = c^f, cost(p_s) = 0, normalized by the all-p_f load.
double compute_cost_fraction(const ScheduleTable& schedule, const CostModel& cost_model);

/// Fraction of full fine-tuning communication: p_f = 1, p_o = 1/2
/// (backward traffic equals forward traffic, and p_o skips backward),
/// p_s = 0, normalized by device-cell count.
double comm_cost_fraction(const ScheduleTable& schedule);

/// Population variance across device rows of per-row compute load
/// normalized by the row's full-operation load. Zero iff all loads equal.
double workload_variance(const ScheduleTable& schedule, const CostModel& cost_model);

/// Simulates one batch: schedule rows are assigned to devices in order,
/// each device receiving memory_units consecutive rows. Busy time is the
/// timing-table cost of the device's total p_f count plus its p_o count.
/// `capacities` (optional) feeds the imbalance residual: the Euclidean norm
/// over devices of (assigned cost units - combined capacity).
BatchMetrics simulate_batch(const ScheduleTable& schedule,
                            const std::vector<DeviceProfile>& profiles,
                            const CostModel& cost_model,
                            const Capacities* capacities = nullptr);

enum class HeteroMode { Memory, Compute };

struct HeteroSetup {
  std::vector<DeviceProfile> profiles;
  BudgetSpec budget;  // per-device overrides for the fast devices
};

/// Memory mode: `count` large devices host two subnet units each, the rest
/// one; budgets stay uniform (2 p_f + 2 p_o). Compute mode: one unit per
/// device; `count` fast devices get (3 p_f, 1 p_o), the rest (2 p_f, 2 p_o).
HeteroSetup build_hetero_profiles(HeteroMode mode, int count, int subnet_units);

/// Named (setting, computed vs nominal percentage) rows for the report.
struct ReferencePoint {
  std::string setting;  // e.g. "3pf+2po of 5"
  int n_full = 0;
  int n_fwd = 0;
  int n_shortcut = 0;
  double computed_pct = 0.0;
  double nominal_pct = 0.0;
  bool discrepancy = false;  // computed and nominal differ by > 0.5 points
};

/// LoRA compute-cost settings under the calibrated LoRA cost model
/// (forward = 7/8 of a full step).
std::vector<ReferencePoint> lora_compute_reference_points();
/// LoRA communication settings. The 3pf+2po row computes to 80% against a
/// nominal 90% and is flagged as a discrepancy.
std::vector<ReferencePoint> lora_comm_reference_points();

}  // namespace d2ft
