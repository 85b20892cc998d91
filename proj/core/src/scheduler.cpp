// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/scheduler.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>

#include "d2ft/threading.hpp"

namespace d2ft {

int CostModel::op_cost(int device, std::uint8_t code) const {
  switch (code) {
    case 1: return full_cost(device);
    case 2: return cf(device);
    case 3: return 0;
  }
  throw input_error("invalid schedule code " + std::to_string(code));
}

void CostModel::validate() const {
  if (forward_cost < 0 || backward_cost < 0) {
    throw config_error("cost model: costs must be nonnegative integers");
  }
  for (int v : forward_cost_per_device)
    if (v < 0) throw config_error("cost model: per-device forward cost negative");
  for (int v : backward_cost_per_device)
    if (v < 0) throw config_error("cost model: per-device backward cost negative");
  if (comm_forward != comm_backward) {
    throw config_error("cost model: forward/backward tensors have equal size, comm units must match");
  }
}

void Capacities::validate() const {
  if (full.size() != fwd.size()) throw input_error("capacities: pool sizes differ");
  for (int v : full)
    if (v < 0) throw input_error("capacities: negative full capacity");
  for (int v : fwd)
    if (v < 0) throw input_error("capacities: negative forward capacity");
}

int BudgetSpec::n_full_for(int device) const {
  for (const Override& o : overrides)
    if (o.device == device) return o.n_full;
  return n_full;
}

int BudgetSpec::n_fwd_for(int device) const {
  for (const Override& o : overrides)
    if (o.device == device) return o.n_fwd;
  return n_fwd;
}

void BudgetSpec::validate(int micro_batches) const {
  auto check = [&](int nf, int no) {
    if (nf < 0 || no < 0) throw input_error("budget: counts must be nonnegative");
    if (nf + no > micro_batches) {
      throw input_error("budget: n_full + n_fwd exceeds micro-batches per batch (" +
                        std::to_string(nf) + "+" + std::to_string(no) + " > " +
                        std::to_string(micro_batches) + ")");
    }
  };
  check(n_full, n_fwd);
  for (const Override& o : overrides) check(o.n_full, o.n_fwd);
}

std::vector<OperationKind> ScheduleTable::column(int i) const {
  std::vector<OperationKind> ops(static_cast<std::size_t>(devices));
  for (int k = 0; k < devices; ++k) ops[static_cast<std::size_t>(k)] = op(k, i);
  return ops;
}

ScheduleTable::Counts ScheduleTable::row_counts(int k) const {
  Counts c;
  for (int i = 0; i < micro_batches; ++i) {
    switch (code(k, i)) {
      case 1: ++c.n_full; break;
      case 2: ++c.n_fwd; break;
      case 3: ++c.n_shortcut; break;
    }
  }
  return c;
}

void ScheduleTable::validate() const {
  if (devices < 0 || micro_batches < 0 ||
      codes.size() != static_cast<std::size_t>(devices) * static_cast<std::size_t>(micro_batches)) {
    throw input_error("schedule table: dimension mismatch");
  }
  for (std::uint8_t c : codes) {
    if (c < 1 || c > 3) throw input_error("schedule table: code out of range");
  }
}

void ScalerConfig::validate() const {
  if (mode == Mode::Constant && !(lambda > 0.0)) {
    throw config_error("scaler: constant lambda must be > 0");
  }
}

CostTables build_cost_tables(const CostModel& cost_model, int devices, int micro_batches) {
  if (devices < 1 || micro_batches < 1) {
    throw input_error("cost tables require at least one device and one micro-batch");
  }
  cost_model.validate();
  CostTables t;
  t.w_full.assign(static_cast<std::size_t>(devices), std::vector<int>());
  t.w_fwd.assign(static_cast<std::size_t>(devices), std::vector<int>());
  for (int k = 0; k < devices; ++k) {
    t.w_full[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(micro_batches),
                                                 cost_model.full_cost(k));
    t.w_fwd[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(micro_batches),
                                                cost_model.cf(k));
  }
  return t;
}

DpResult dp_search(const std::vector<std::vector<double>>& scores,
                   const std::vector<std::vector<int>>& weights,
                   const std::vector<int>& capacities, int threads) {
  const int devices = static_cast<int>(scores.size());
  if (weights.size() != scores.size() || capacities.size() != scores.size()) {
    throw input_error("dp_search: scores, weights and capacities must agree on device count");
  }
  for (int cap : capacities) {
    if (cap < 0) throw input_error("dp_search: negative capacity");
  }
  // validate up front: worker threads must not throw
  for (int k = 0; k < devices; ++k) {
    if (scores[static_cast<std::size_t>(k)].size() != weights[static_cast<std::size_t>(k)].size()) {
      throw input_error("dp_search: score/weight row length mismatch");
    }
    for (double s : scores[static_cast<std::size_t>(k)]) {
      if (!std::isfinite(s)) throw numeric_error("dp_search: non-finite score");
    }
    for (int w : weights[static_cast<std::size_t>(k)]) {
      if (w < 0) throw input_error("dp_search: negative weight");
    }
  }

  DpResult result;
  result.selection.assign(static_cast<std::size_t>(devices), {});
  result.objective.assign(static_cast<std::size_t>(devices), 0.0);

  parallel_for(devices, threads, [&](int k) {
    const auto& row_scores = scores[static_cast<std::size_t>(k)];
    const auto& row_weights = weights[static_cast<std::size_t>(k)];
    const int n = static_cast<int>(row_scores.size());
    const int cap = capacities[static_cast<std::size_t>(k)];

    // Phase 1: value table over items x capacity. Selection requires a
    // strict improvement, so ties keep the skip branch.
    std::vector<std::vector<double>> table(
        static_cast<std::size_t>(n) + 1, std::vector<double>(static_cast<std::size_t>(cap) + 1, 0.0));
    for (int i = 1; i <= n; ++i) {
      const int wt = row_weights[static_cast<std::size_t>(i - 1)];
      const double val = row_scores[static_cast<std::size_t>(i - 1)];
      for (int w = 0; w <= cap; ++w) {
        double skip = table[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(w)];
        if (w >= wt) {
          double take =
              table[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(w - wt)] + val;
          table[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] =
              take > skip ? take : skip;
        } else {
          table[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] = skip;
        }
      }
    }

    // Phase 2: backtrack one optimal subset.
    std::vector<std::uint8_t> selected(static_cast<std::size_t>(n), 0);
    int w = cap;
    for (int i = n; i > 0; --i) {
      if (table[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] !=
          table[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(w)]) {
        selected[static_cast<std::size_t>(i - 1)] = 1;
        w -= row_weights[static_cast<std::size_t>(i - 1)];
      }
    }
    result.objective[static_cast<std::size_t>(k)] =
        table[static_cast<std::size_t>(n)][static_cast<std::size_t>(cap)];
    result.selection[static_cast<std::size_t>(k)] = std::move(selected);
  });
  return result;
}

ScheduleTable merge_selections(const std::vector<std::vector<std::uint8_t>>& full_selection,
                               const std::vector<std::vector<std::uint8_t>>& fwd_selection) {
  if (full_selection.size() != fwd_selection.size()) {
    throw input_error("merge_selections: device counts differ");
  }
  const int k_devices = static_cast<int>(full_selection.size());
  const int n = k_devices > 0 ? static_cast<int>(full_selection.front().size()) : 0;
  ScheduleTable out(k_devices, n);
  for (int k = 0; k < k_devices; ++k) {
    const auto& full_row = full_selection[static_cast<std::size_t>(k)];
    const auto& fwd_row = fwd_selection[static_cast<std::size_t>(k)];
    if (static_cast<int>(full_row.size()) != n || static_cast<int>(fwd_row.size()) != n) {
      throw input_error("merge_selections: ragged selection rows");
    }
    for (int i = 0; i < n; ++i) {
      bool in_full = full_row[static_cast<std::size_t>(i)];
      bool in_fwd = fwd_row[static_cast<std::size_t>(i)];
      std::uint8_t code;
      if (in_full) {
        code = 1;  // selected for p_f (alone or by both passes)
      } else if (in_fwd) {
        code = 2;
      } else {
        code = 3;
      }
      out.set_code(k, i, code);
    }
  }
  return out;
}

ScheduleTable knapsack_schedule(const ScoreTable& scores, const CostModel& cost_model,
                                const Capacities& capacities, int threads) {
  scores.validate();
  capacities.validate();
  const int k_devices = scores.subnets;
  const int n = scores.micro_batches;
  if (capacities.devices() != k_devices) {
    throw input_error("knapsack_schedule: capacities device count mismatch");
  }

  CostTables tables = build_cost_tables(cost_model, k_devices, n);
  DpResult full_sel = dp_search(scores.backward, tables.w_full, capacities.full, threads);
  DpResult fwd_sel = dp_search(scores.forward, tables.w_fwd, capacities.fwd, threads);
  return merge_selections(full_sel.selection, fwd_sel.selection);
}

namespace {

int pow3(int n) {
  int p = 1;
  for (int i = 0; i < n; ++i) p *= 3;
  return p;
}

}  // namespace

ScheduleTable brute_force_schedule(const ScoreTable& scores, const CostModel& cost_model,
                                   const Capacities& capacities, int threads) {
  scores.validate();
  capacities.validate();
  const int k_devices = scores.subnets;
  const int n = scores.micro_batches;
  if (capacities.devices() != k_devices) {
    throw input_error("brute_force_schedule: capacities device count mismatch");
  }
  if (n > 14) {
    throw size_error("brute_force_schedule: " + std::to_string(n) +
                     " micro-batches exceeds the 3^N enumeration bound (N <= 14)");
  }

  const int total = pow3(n);
  ScheduleTable out(k_devices, n);
  parallel_for(k_devices, threads, [&](int k) {
    const int cap = capacities.full[static_cast<std::size_t>(k)] +
                    capacities.fwd[static_cast<std::size_t>(k)];
    const int c_full = cost_model.full_cost(k);
    const int c_fwd = cost_model.cf(k);
    double best = -1.0;
    int best_assign = 0;
    // digit 0 = p_s, 1 = p_o, 2 = p_f; first-found maximum wins. A full
    // operation runs the forward pass as well, so it realizes both the
    // backward and the forward contribution of its cell.
    for (int assign = 0; assign < total; ++assign) {
      int cost = 0;
      double value = 0.0;
      int rest = assign;
      for (int i = 0; i < n && cost <= cap; ++i) {
        int digit = rest % 3;
        rest /= 3;
        if (digit == 2) {
          cost += c_full;
          value += scores.bwd(k, i) + scores.fwd(k, i);
        } else if (digit == 1) {
          cost += c_fwd;
          value += scores.fwd(k, i);
        }
      }
      if (cost <= cap && value > best) {
        best = value;
        best_assign = assign;
      }
    }
    int rest = best_assign;
    for (int i = 0; i < n; ++i) {
      int digit = rest % 3;
      rest /= 3;
      out.set_code(k, i, digit == 2 ? 1 : digit == 1 ? 2 : 3);
    }
  });
  return out;
}

std::vector<double> schedule_objective(const ScheduleTable& table, const ScoreTable& scores) {
  if (table.devices != scores.subnets || table.micro_batches != scores.micro_batches) {
    throw input_error("schedule_objective: table/score dimensions differ");
  }
  std::vector<double> obj(static_cast<std::size_t>(table.devices), 0.0);
  for (int k = 0; k < table.devices; ++k) {
    for (int i = 0; i < table.micro_batches; ++i) {
      if (table.code(k, i) == 1) {
        obj[static_cast<std::size_t>(k)] += scores.bwd(k, i) + scores.fwd(k, i);
      } else if (table.code(k, i) == 2) {
        obj[static_cast<std::size_t>(k)] += scores.fwd(k, i);
      }
    }
  }
  return obj;
}

ScalerResult scaler_schedule(const ScoreTable& scores, const CostModel& cost_model,
                             const std::vector<int>& total_capacity, const ScalerConfig& scaler,
                             int threads) {
  scores.validate();
  scaler.validate();
  cost_model.validate();
  const int k_devices = scores.subnets;
  const int n = scores.micro_batches;
  if (static_cast<int>(total_capacity.size()) != k_devices) {
    throw input_error("scaler_schedule: capacity count mismatch");
  }
  for (int c : total_capacity) {
    if (c < 0) throw input_error("scaler_schedule: negative capacity");
  }

  double max_fwd = 0.0, max_bwd = 0.0;
  std::optional<double> min_pos_fwd, min_pos_bwd;
  for (int k = 0; k < k_devices; ++k) {
    for (int i = 0; i < n; ++i) {
      double f = scores.fwd(k, i), b = scores.bwd(k, i);
      max_fwd = std::max(max_fwd, f);
      max_bwd = std::max(max_bwd, b);
      if (f > 0.0 && (!min_pos_fwd || f < *min_pos_fwd)) min_pos_fwd = f;
      if (b > 0.0 && (!min_pos_bwd || b < *min_pos_bwd)) min_pos_bwd = b;
    }
  }

  ScalerResult result;
  switch (scaler.mode) {
    case ScalerConfig::Mode::Max:
      // every scaled forward score strictly below the minimum positive
      // backward score
      if (max_fwd > 0.0 && min_pos_bwd) {
        result.lambda_used = 0.5 * *min_pos_bwd / max_fwd;
      } else {
        result.lambda_used = 1.0;
        result.fell_back = true;
      }
      break;
    case ScalerConfig::Mode::Min:
      // every backward score below the minimum positive scaled forward score
      if (min_pos_fwd) {
        result.lambda_used = max_bwd > 0.0 ? 2.0 * max_bwd / *min_pos_fwd : 1.0;
      } else {
        result.lambda_used = 1.0;
        result.fell_back = true;
      }
      break;
    case ScalerConfig::Mode::Constant:
      result.lambda_used = scaler.lambda;
      break;
  }
  if (result.fell_back) {
    std::fprintf(stderr, "[d2ft] scaler: degenerate all-zero scores, falling back to lambda=1\n");
  }
  const double lambda = result.lambda_used;

  result.table = ScheduleTable(k_devices, n);
  parallel_for(k_devices, threads, [&](int k) {
    const int cap = total_capacity[static_cast<std::size_t>(k)];
    const int w_full = cost_model.full_cost(k);
    const int w_fwd = cost_model.cf(k);

    // Multiple-choice knapsack: each micro-batch picks exactly one of
    // p_s (0, 0), p_o (lambda*A^po, c^f), p_f (A^pf, c^f+c^b). Choices are
    // tried in that order and replaced only on strict improvement.
    std::vector<std::vector<double>> value(
        static_cast<std::size_t>(n) + 1, std::vector<double>(static_cast<std::size_t>(cap) + 1, 0.0));
    std::vector<std::vector<std::uint8_t>> choice(
        static_cast<std::size_t>(n) + 1, std::vector<std::uint8_t>(static_cast<std::size_t>(cap) + 1, 3));
    for (int i = 1; i <= n; ++i) {
      const double v_fwd = lambda * scores.fwd(k, i - 1);
      const double v_full = scores.bwd(k, i - 1);
      for (int w = 0; w <= cap; ++w) {
        double best = value[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(w)];
        std::uint8_t best_choice = 3;
        if (w >= w_fwd) {
          double cand =
              value[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(w - w_fwd)] + v_fwd;
          if (cand > best) {
            best = cand;
            best_choice = 2;
          }
        }
        if (w >= w_full) {
          double cand =
              value[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(w - w_full)] + v_full;
          if (cand > best) {
            best = cand;
            best_choice = 1;
          }
        }
        value[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] = best;
        choice[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] = best_choice;
      }
    }
    int w = cap;
    for (int i = n; i > 0; --i) {
      std::uint8_t c = choice[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)];
      result.table.set_code(k, i - 1, c);
      if (c == 1) w -= w_full;
      else if (c == 2) w -= w_fwd;
    }
  });
  return result;
}

Capacities capacities_from_budget(const BudgetSpec& budget, const CostModel& cost_model,
                                  int devices, int micro_batches) {
  budget.validate(micro_batches);
  cost_model.validate();
  Capacities caps;
  caps.full.resize(static_cast<std::size_t>(devices));
  caps.fwd.resize(static_cast<std::size_t>(devices));
  for (int k = 0; k < devices; ++k) {
    caps.full[static_cast<std::size_t>(k)] = budget.n_full_for(k) * cost_model.full_cost(k);
    caps.fwd[static_cast<std::size_t>(k)] = budget.n_fwd_for(k) * cost_model.cf(k);
  }
  return caps;
}

int row_cost_units(const ScheduleTable& table, const CostModel& cost_model, int device) {
  int units = 0;
  for (int i = 0; i < table.micro_batches; ++i) units += cost_model.op_cost(device, table.code(device, i));
  return units;
}

SharedBudgetReport check_shared_budget(const ScheduleTable& table, const CostModel& cost_model,
                                       const Capacities& capacities) {
  table.validate();
  capacities.validate();
  if (capacities.devices() != table.devices) {
    throw input_error("check_shared_budget: capacities device count mismatch");
  }
  SharedBudgetReport report;
  for (int k = 0; k < table.devices; ++k) {
    SharedBudgetReport::Entry e;
    e.device = k;
    e.cost_units = row_cost_units(table, cost_model, k);
    e.limit = capacities.full[static_cast<std::size_t>(k)] + capacities.fwd[static_cast<std::size_t>(k)];
    if (e.cost_units > e.limit) report.violations.push_back(k);
    report.devices.push_back(e);
  }
  return report;
}

}  // namespace d2ft
