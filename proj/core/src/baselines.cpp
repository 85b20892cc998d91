// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "d2ft/rng.hpp"
#include "d2ft/scoring.hpp"

namespace d2ft {

void BaselineKind::validate() const {
  if (type != Type::Random && refresh_interval < 1) {
    throw config_error("dynamic pruning: refresh_interval must be >= 1");
  }
}

ScheduleTable random_schedule(const BudgetSpec& budget, int devices, int micro_batches,
                              std::uint64_t seed) {
  budget.validate(micro_batches);
  ScheduleTable table(devices, micro_batches);
  for (int k = 0; k < devices; ++k) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(k));
    std::vector<int> perm(static_cast<std::size_t>(micro_batches));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    int nf = budget.n_full_for(k);
    int no = budget.n_fwd_for(k);
    for (int j = 0; j < nf; ++j) table.set_code(k, perm[static_cast<std::size_t>(j)], 1);
    for (int j = nf; j < nf + no; ++j) table.set_code(k, perm[static_cast<std::size_t>(j)], 2);
  }
  return table;
}

std::vector<double> block_weight_magnitudes(const SubnetModel& model) {
  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(model.scheduled_count()));
  for (int r = 0; r < model.scheduled_count(); ++r) {
    const Subnet& s = model.subnet(model.subnet_index_of_scheduled(r));
    mags.push_back(weight_magnitude(s, model.lora_enabled()));
  }
  return mags;
}

ScheduleTable pruning_schedule_from_ranking(const std::vector<double>& ranking,
                                            const BudgetSpec& budget,
                                            const CostModel& cost_model, int micro_batches) {
  budget.validate(micro_batches);
  cost_model.validate();
  const int devices = static_cast<int>(ranking.size());

  // Budget parity with the scheduled methods: same total compute units.
  long long units = 0;
  for (int k = 0; k < devices; ++k) {
    units += static_cast<long long>(budget.n_full_for(k)) * cost_model.full_cost(k) +
             static_cast<long long>(budget.n_fwd_for(k)) * cost_model.cf(k);
  }

  std::vector<int> order(static_cast<std::size_t>(devices));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ranking[static_cast<std::size_t>(a)] > ranking[static_cast<std::size_t>(b)]; });

  ScheduleTable table(devices, micro_batches);
  for (int k : order) {
    const int cell = cost_model.full_cost(k);
    if (cell == 0) {
      for (int i = 0; i < micro_batches; ++i) table.set_code(k, i, 1);
      continue;
    }
    for (int i = 0; i < micro_batches && units >= cell; ++i) {
      table.set_code(k, i, 1);
      units -= cell;
    }
    if (units < cell) break;
  }
  return table;
}

DynamicPruningPolicy::DynamicPruningPolicy(BaselineKind kind) : kind_(kind) {
  if (kind_.type == BaselineKind::Type::Random) {
    throw config_error("DynamicPruningPolicy requires a pruning baseline kind");
  }
  kind_.validate();
}

ScheduleTable DynamicPruningPolicy::schedule(const SubnetModel& model,
                                             const std::vector<double>& grad_magnitudes,
                                             const BudgetSpec& budget,
                                             const CostModel& cost_model, int micro_batches,
                                             int iteration) {
  bool boundary = (iteration % kind_.refresh_interval == 0);
  if (!initialized_) {
    cached_ranking_ = block_weight_magnitudes(model);
    if (kind_.type == BaselineKind::Type::DPruningMG && !grad_magnitudes.empty()) {
      last_grad_order_.resize(grad_magnitudes.size());
      std::iota(last_grad_order_.begin(), last_grad_order_.end(), 0);
      std::stable_sort(last_grad_order_.begin(), last_grad_order_.end(), [&](int a, int b) {
        return grad_magnitudes[static_cast<std::size_t>(a)] > grad_magnitudes[static_cast<std::size_t>(b)];
      });
    }
    initialized_ = true;
  } else if (boundary) {
    if (kind_.type == BaselineKind::Type::DPruningM) {
      cached_ranking_ = block_weight_magnitudes(model);
    } else if (!grad_magnitudes.empty()) {
      std::vector<int> order(grad_magnitudes.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return grad_magnitudes[static_cast<std::size_t>(a)] > grad_magnitudes[static_cast<std::size_t>(b)];
      });
      if (order != last_grad_order_) {
        cached_ranking_ = block_weight_magnitudes(model);
        last_grad_order_ = std::move(order);
      }
    }
  }
  return pruning_schedule_from_ranking(cached_ranking_, budget, cost_model, micro_batches);
}

}  // namespace d2ft
