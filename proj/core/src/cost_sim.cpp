// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/cost_sim.hpp"

#include <cmath>

namespace d2ft {

std::vector<TimingEntry> default_timing_table() {
  return {
      {1, 2.01, 0.86}, {2, 2.20, 1.01}, {3, 2.27, 1.05}, {4, 2.74, 1.20}, {5, 3.16, 1.48},
  };
}

DeviceProfile DeviceProfile::standard(int id) {
  DeviceProfile p;
  p.device_id = id;
  p.timing_table = default_timing_table();
  return p;
}

void DeviceProfile::validate() const {
  if (memory_units < 1) throw input_error("device profile: memory_units must be >= 1");
  if (timing_table.empty()) throw input_error("device profile: empty timing table");
  const TimingEntry* prev = nullptr;
  for (const TimingEntry& e : timing_table) {
    if (e.count < 1 || e.full_ms < 0.0 || e.fwd_ms < 0.0) {
      throw input_error("device profile: invalid timing entry");
    }
    if (prev && (e.count <= prev->count || e.full_ms < prev->full_ms || e.fwd_ms < prev->fwd_ms)) {
      throw input_error("device profile: timing table must be monotone nondecreasing");
    }
    prev = &e;
  }
}

double DeviceProfile::time_ms(int count, bool full) const {
  if (count < 0) throw input_error("device profile: negative micro-batch count");
  if (count == 0) return 0.0;
  auto value = [&](const TimingEntry& e) { return full ? e.full_ms : e.fwd_ms; };
  // exact hit
  for (const TimingEntry& e : timing_table) {
    if (e.count == count) return value(e);
  }
  // segment endpoints, with an implicit (0, 0 ms) anchor below the table
  int lo_count = 0;
  double lo_val = 0.0;
  for (const TimingEntry& e : timing_table) {
    if (e.count < count) {
      lo_count = e.count;
      lo_val = value(e);
    } else {
      double slope = (value(e) - lo_val) / (e.count - lo_count);
      return lo_val + slope * (count - lo_count);
    }
  }
  // beyond the table: extrapolate the last segment's slope
  const TimingEntry& last = timing_table.back();
  int prev_count = 0;
  double prev_val = 0.0;
  if (timing_table.size() >= 2) {
    const TimingEntry& second_last = timing_table[timing_table.size() - 2];
    prev_count = second_last.count;
    prev_val = value(second_last);
  }
  double slope = (value(last) - prev_val) / (last.count - prev_count);
  return value(last) + slope * (count - last.count);
}

double compute_cost_fraction(const ScheduleTable& schedule, const CostModel& cost_model) {
  schedule.validate();
  long long used = 0, total = 0;
  for (int k = 0; k < schedule.devices; ++k) {
    used += row_cost_units(schedule, cost_model, k);
    total += static_cast<long long>(schedule.micro_batches) * cost_model.full_cost(k);
  }
  if (total == 0) return 0.0;
  return static_cast<double>(used) / static_cast<double>(total);
}

double comm_cost_fraction(const ScheduleTable& schedule) {
  schedule.validate();
  double used = 0.0;
  for (std::uint8_t c : schedule.codes) {
    if (c == 1) used += 1.0;
    else if (c == 2) used += 0.5;
  }
  std::size_t cells = schedule.codes.size();
  if (cells == 0) return 0.0;
  return used / static_cast<double>(cells);
}

double workload_variance(const ScheduleTable& schedule, const CostModel& cost_model) {
  schedule.validate();
  const int k_devices = schedule.devices;
  if (k_devices == 0) return 0.0;
  std::vector<double> loads(static_cast<std::size_t>(k_devices));
  for (int k = 0; k < k_devices; ++k) {
    double full_load = static_cast<double>(schedule.micro_batches) * cost_model.full_cost(k);
    loads[static_cast<std::size_t>(k)] =
        full_load > 0.0 ? row_cost_units(schedule, cost_model, k) / full_load : 0.0;
  }
  double mean = 0.0;
  for (double l : loads) mean += l;
  mean /= k_devices;
  double var = 0.0;
  for (double l : loads) var += (l - mean) * (l - mean);
  return var / k_devices;
}

BatchMetrics simulate_batch(const ScheduleTable& schedule,
                            const std::vector<DeviceProfile>& profiles,
                            const CostModel& cost_model, const Capacities* capacities) {
  schedule.validate();
  if (profiles.empty()) throw input_error("simulate_batch: no device profiles");
  int hosted = 0;
  for (const DeviceProfile& p : profiles) {
    p.validate();
    hosted += p.memory_units;
  }
  if (hosted != schedule.devices) {
    throw input_error("simulate_batch: profiles host " + std::to_string(hosted) +
                      " subnet units but the schedule has " + std::to_string(schedule.devices) +
                      " rows");
  }
  if (capacities && capacities->devices() != schedule.devices) {
    throw input_error("simulate_batch: capacities must be per schedule row");
  }

  BatchMetrics m;
  m.compute_fraction = compute_cost_fraction(schedule, cost_model);
  m.comm_fraction = comm_cost_fraction(schedule);

  std::vector<double> norm_loads;
  norm_loads.reserve(profiles.size());
  double residual_sq = 0.0;
  int row = 0;
  for (const DeviceProfile& p : profiles) {
    int n_full = 0, n_fwd = 0;
    long long units = 0, full_units = 0, limit_units = 0;
    for (int u = 0; u < p.memory_units; ++u, ++row) {
      ScheduleTable::Counts c = schedule.row_counts(row);
      n_full += c.n_full;
      n_fwd += c.n_fwd;
      units += row_cost_units(schedule, cost_model, row);
      full_units += static_cast<long long>(schedule.micro_batches) * cost_model.full_cost(row);
      if (capacities) {
        limit_units += capacities->full[static_cast<std::size_t>(row)] +
             capacities->fwd[static_cast<std::size_t>(row)];
      }
    }
    double busy = p.time_ms(n_full, true) + p.time_ms(n_fwd, false);
    m.per_device_busy_ms.push_back(busy);
    m.makespan_ms = std::max(m.makespan_ms, busy);
    norm_loads.push_back(full_units > 0 ? static_cast<double>(units) / static_cast<double>(full_units)
                                        : 0.0);
    if (capacities) {
      double diff = static_cast<double>(units) - static_cast<double>(limit_units);
      residual_sq += diff * diff;
    }
  }

  double mean = 0.0;
  for (double l : norm_loads) mean += l;
  mean /= static_cast<double>(norm_loads.size());
  double var = 0.0;
  for (double l : norm_loads) var += (l - mean) * (l - mean);
  m.workload_variance = var / static_cast<double>(norm_loads.size());
  m.imbalance_residual = std::sqrt(residual_sq);
  return m;
}

HeteroSetup build_hetero_profiles(HeteroMode mode, int count, int subnet_units) {
  if (count < 0 || subnet_units < 1) throw input_error("build_hetero_profiles: bad arguments");
  HeteroSetup setup;
  setup.budget.n_full = 2;
  setup.budget.n_fwd = 2;
  if (mode == HeteroMode::Memory) {
    int large_units = 2 * count;
    if (large_units > subnet_units) {
      throw input_error("build_hetero_profiles: " + std::to_string(count) +
                        " large devices cannot host " + std::to_string(subnet_units) +
                        " subnet units");
    }
    int small = subnet_units - large_units;
    int id = 0;
    for (int i = 0; i < count; ++i) {
      DeviceProfile p = DeviceProfile::standard(id++);
      p.memory_units = 2;
      setup.profiles.push_back(std::move(p));
    }
    for (int i = 0; i < small; ++i) setup.profiles.push_back(DeviceProfile::standard(id++));
  } else {
    if (count > subnet_units) {
      throw input_error("build_hetero_profiles: more fast devices than subnet units");
    }
    for (int i = 0; i < subnet_units; ++i) {
      DeviceProfile p = DeviceProfile::standard(i);
      if (i < count) {
        p.speed_class = DeviceProfile::Speed::Fast;
        setup.budget.overrides.push_back({i, 3, 1});
      }
      setup.profiles.push_back(std::move(p));
    }
  }
  return setup;
}

namespace {

ReferencePoint make_point(const std::string& setting, int nf, int no, int ns, double nominal,
                          const CostModel& cost_model, bool comm) {
  int n = nf + no + ns;
  ScheduleTable t(1, n);
  for (int i = 0; i < nf; ++i) t.set_code(0, i, 1);
  for (int i = nf; i < nf + no; ++i) t.set_code(0, i, 2);
  ReferencePoint p;
  p.setting = setting;
  p.n_full = nf;
  p.n_fwd = no;
  p.n_shortcut = ns;
  p.computed_pct = 100.0 * (comm ? comm_cost_fraction(t) : compute_cost_fraction(t, cost_model));
  p.nominal_pct = nominal;
  p.discrepancy = std::abs(p.computed_pct - p.nominal_pct) > 0.5;
  return p;
}

}  // namespace

std::vector<ReferencePoint> lora_compute_reference_points() {
  CostModel lora = CostModel::lora_finetune();
  return {
      make_point("3pf+2po of 5", 3, 2, 0, 95.0, lora, false),
      make_point("3pf+1po+1ps of 5", 3, 1, 1, 75.0, lora, false),
      make_point("3pf+2ps of 5", 3, 0, 2, 60.0, lora, false),
  };
}

std::vector<ReferencePoint> lora_comm_reference_points() {
  CostModel lora = CostModel::lora_finetune();
  return {
      make_point("3pf+2po of 5", 3, 2, 0, 90.0, lora, true),
      make_point("3pf+1po+1ps of 5", 3, 1, 1, 70.0, lora, true),
      make_point("2pf+1po+2ps of 5", 2, 1, 2, 50.0, lora, true),
  };
}

}  // namespace d2ft
