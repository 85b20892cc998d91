// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "d2ft/rng.hpp"

namespace d2ft {

const char* policy_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::Standard: return "standard";
    case PolicyKind::D2FT: return "d2ft";
    case PolicyKind::Random: return "random";
    case PolicyKind::DPruningM: return "dpruning_m";
    case PolicyKind::DPruningMG: return "dpruning_mg";
    case PolicyKind::Scaler: return "scaler";
  }
  return "?";
}

PolicyKind policy_from_name(const std::string& name) {
  if (name == "standard") return PolicyKind::Standard;
  if (name == "d2ft") return PolicyKind::D2FT;
  if (name == "random") return PolicyKind::Random;
  if (name == "dpruning_m") return PolicyKind::DPruningM;
  if (name == "dpruning_mg") return PolicyKind::DPruningMG;
  if (name == "scaler") return PolicyKind::Scaler;
  throw config_error("unknown policy: " + name);
}

void TrainConfig::validate(int dataset_size) const {
  if (epochs < 1) throw config_error("train: epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw config_error("train: learning rate must be positive and finite");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw config_error("train: momentum must be in [0, 1)");
  if (batch_size < 1 || micro_batch_size < 1 || batch_size % micro_batch_size != 0) {
    throw config_error("train: batch_size must be a positive multiple of micro_batch_size");
  }
  if (dataset_size % batch_size != 0) {
    throw config_error("train: dataset size must be a multiple of batch_size for clean epochs");
  }
  try {
    budget.validate(micro_batches_per_batch());
    cost_model.validate();
    if (policy.kind == PolicyKind::Scaler) policy.scaler.validate();
  } catch (const Error& e) {
    throw config_error(std::string("train: infeasible setup: ") + e.what());
  }
  if ((policy.kind == PolicyKind::DPruningM || policy.kind == PolicyKind::DPruningMG) &&
      policy.refresh_interval < 1) {
    throw config_error("train: refresh_interval must be >= 1");
  }
}

void SynthDatasetSpec::validate() const {
  if (num_samples < 1 || num_classes < 1 || token_dim < 1 || seq_len < 1) {
    throw input_error("dataset spec: degenerate dimensions");
  }
  if (noise_level < 0.0 || !std::isfinite(noise_level)) {
    throw input_error("dataset spec: noise_level must be nonnegative and finite");
  }
  if (num_samples % num_classes != 0) {
    throw input_error("dataset spec: num_samples must be a multiple of num_classes");
  }
}

std::vector<double> synthetic_class_mean(const SynthDatasetSpec& spec, int label) {
  // all class means come from one stream, drawn class-major
  auto rng = make_rng(spec.seed, 0);
  std::vector<double> mean(static_cast<std::size_t>(spec.token_dim), 0.0);
  for (int c = 0; c <= label; ++c) {
    for (int j = 0; j < spec.token_dim; ++j) mean[static_cast<std::size_t>(j)] = gaussian(rng);
  }
  return mean;
}

Dataset make_synthetic_dataset(const SynthDatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.samples.reserve(static_cast<std::size_t>(spec.num_samples));
  ds.labels.reserve(static_cast<std::size_t>(spec.num_samples));

  auto mean_rng = make_rng(spec.seed, 0);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(spec.num_classes));
  for (auto& m : means) {
    m.resize(static_cast<std::size_t>(spec.token_dim));
    for (double& v : m) v = gaussian(mean_rng);
  }

  for (int i = 0; i < spec.num_samples; ++i) {
    int label = i % spec.num_classes;
    auto rng = make_rng(spec.seed, 1 + static_cast<std::uint64_t>(i));
    Matrix x(spec.seq_len, spec.token_dim);
    for (int t = 0; t < spec.seq_len; ++t) {
      for (int j = 0; j < spec.token_dim; ++j) {
        x(t, j) = means[static_cast<std::size_t>(label)][static_cast<std::size_t>(j)] +
                  spec.noise_level * gaussian(rng);
      }
    }
    ds.samples.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  return ds;
}

void sgd_momentum_step(Matrix& params, const Matrix& grads, Matrix& velocity, double lr,
                       double momentum) {
  check_shape(grads, params.rows, params.cols, "sgd grads");
  check_shape(velocity, params.rows, params.cols, "sgd velocity");
  for (std::size_t i = 0; i < params.data.size(); ++i) {
    if (!std::isfinite(grads.data[i])) throw numeric_error("sgd: non-finite gradient");
    velocity.data[i] = momentum * velocity.data[i] + grads.data[i];
    params.data[i] -= lr * velocity.data[i];
  }
}

void sgd_momentum_step(Subnet& params, const Subnet& grads, Subnet& velocity, double lr,
                       double momentum, bool lora_mode) {
  std::vector<Matrix*> ps, vs;
  std::vector<const Matrix*> gs;
  visit_trainable(params, lora_mode, [&](const char*, Matrix& m) { ps.push_back(&m); });
  visit_trainable(velocity, lora_mode, [&](const char*, Matrix& m) { vs.push_back(&m); });
  visit_trainable(grads, lora_mode, [&](const char*, const Matrix& m) { gs.push_back(&m); });
  for (std::size_t t = 0; t < ps.size(); ++t) {
    sgd_momentum_step(*ps[t], *gs[t], *vs[t], lr, momentum);
  }
}

namespace {

/// Per-batch score slice for the given micro-batch units.
ScoreTable slice_scores(const ScoreTable& scores, const std::vector<int>& units) {
  ScoreTable s;
  s.subnets = scores.subnets;
  s.micro_batches = static_cast<int>(units.size());
  s.fwd_metric = scores.fwd_metric;
  s.bwd_metric = scores.bwd_metric;
  s.forward.assign(static_cast<std::size_t>(s.subnets), {});
  s.backward.assign(static_cast<std::size_t>(s.subnets), {});
  for (int k = 0; k < s.subnets; ++k) {
    for (int u : units) {
      s.forward[static_cast<std::size_t>(k)].push_back(scores.fwd(k, u));
      s.backward[static_cast<std::size_t>(k)].push_back(scores.bwd(k, u));
    }
  }
  return s;
}

}  // namespace

TrainHistory train(SubnetModel& model, const Dataset& dataset, const TrainConfig& config) {
  config.validate(dataset.size());
  for (const Matrix& sample : dataset.samples) {
    check_shape(sample, model.config().seq_len, model.config().model_dim, "train sample");
  }

  const int n_mb = config.micro_batches_per_batch();
  const int total_units = dataset.micro_batch_count(config.micro_batch_size);
  const int batches_per_epoch = total_units / n_mb;
  const int k_sched = model.scheduled_count();

  // one-time scoring pre-pass; never refreshed during training
  ScoreTable scores;
  const bool needs_scores =
      config.policy.kind == PolicyKind::D2FT || config.policy.kind == PolicyKind::Scaler;
  if (needs_scores) {
    scores = prepass_scores(model, dataset, config.micro_batch_size, config.fwd_metric,
                            config.bwd_metric, config.threads);
  }

  Capacities capacities =
      capacities_from_budget(config.budget, config.cost_model, k_sched, n_mb);
  std::vector<int> total_capacity(static_cast<std::size_t>(k_sched));
  for (int k = 0; k < k_sched; ++k) {
    total_capacity[static_cast<std::size_t>(k)] =
        capacities.full[static_cast<std::size_t>(k)] + capacities.fwd[static_cast<std::size_t>(k)];
  }

  std::optional<DynamicPruningPolicy> pruning;
  if (config.policy.kind == PolicyKind::DPruningM) {
    pruning.emplace(BaselineKind::dpruning_m(config.policy.refresh_interval));
  } else if (config.policy.kind == PolicyKind::DPruningMG) {
    pruning.emplace(BaselineKind::dpruning_mg(config.policy.refresh_interval));
  }
  std::vector<double> last_grad_magnitudes;

  std::vector<Subnet> velocity;
  velocity.reserve(model.subnets().size());
  for (const Subnet& s : model.subnets()) velocity.push_back(zeros_like(s));

  std::vector<int> unit_order(static_cast<std::size_t>(total_units));
  std::iota(unit_order.begin(), unit_order.end(), 0);

  TrainHistory history;
  int iteration = 0;
  const double inv_mb = 1.0 / static_cast<double>(n_mb);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto erng = make_rng(config.seed, 0xE000u + static_cast<std::uint64_t>(epoch));
    shuffle(unit_order, erng);

    double epoch_loss = 0.0;
    long long used_units = 0, full_units = 0;
    double used_comm = 0.0;
    long long comm_cells = 0;

    for (int b = 0; b < batches_per_epoch; ++b) {
      std::vector<int> units(unit_order.begin() + static_cast<std::ptrdiff_t>(b) * n_mb,
                             unit_order.begin() + static_cast<std::ptrdiff_t>(b + 1) * n_mb);

      ScheduleTable table;
      switch (config.policy.kind) {
        case PolicyKind::Standard: {
          table = ScheduleTable(k_sched, n_mb);
          for (auto& c : table.codes) c = 1;
          break;
        }
        case PolicyKind::D2FT:
          table = knapsack_schedule(slice_scores(scores, units), config.cost_model, capacities,
                                    config.threads);
          break;
        case PolicyKind::Scaler:
          table = scaler_schedule(slice_scores(scores, units), config.cost_model, total_capacity,
                                  config.policy.scaler, config.threads)
                      .table;
          break;
        case PolicyKind::Random:
          table = random_schedule(config.budget, k_sched, n_mb,
                                  splitmix64(config.seed ^ (0xB000u + static_cast<std::uint64_t>(iteration))));
          break;
        case PolicyKind::DPruningM:
        case PolicyKind::DPruningMG:
          table = pruning->schedule(model, last_grad_magnitudes, config.budget, config.cost_model,
                                    n_mb, iteration);
          break;
      }

      // forward/backward every micro-batch under its schedule column,
      // accumulating batch-mean gradients in unit order
      std::vector<std::optional<Subnet>> accum(model.subnets().size());
      double batch_loss = 0.0;
      for (int j = 0; j < n_mb; ++j) {
        ForwardBackwardResult fb = model.forward_backward(
            dataset.unit_inputs(units[static_cast<std::size_t>(j)], config.micro_batch_size),
            dataset.unit_labels(units[static_cast<std::size_t>(j)], config.micro_batch_size),
            table.column(j));
        batch_loss += fb.loss * inv_mb;
        for (std::size_t si = 0; si < fb.grads.size(); ++si) {
          if (!fb.grads[si]) continue;
          if (!accum[si]) accum[si].emplace(zeros_like(model.subnet(static_cast<int>(si))));
          accumulate(*accum[si], *fb.grads[si], inv_mb);
        }
      }
      epoch_loss += batch_loss / batches_per_epoch;

      // optimizer step: only subnets that received gradients this batch
      for (std::size_t si = 0; si < accum.size(); ++si) {
        if (!accum[si]) continue;
        sgd_momentum_step(model.subnet(static_cast<int>(si)), *accum[si], velocity[si],
                          config.learning_rate, config.momentum, model.lora_enabled());
      }

      // realized cost accounting (identical to the scheduled table)
      for (int k = 0; k < k_sched; ++k) {
        used_units += row_cost_units(table, config.cost_model, k);
        full_units += static_cast<long long>(n_mb) * config.cost_model.full_cost(k);
      }
      for (std::uint8_t c : table.codes) {
        if (c == 1) used_comm += 1.0;
        else if (c == 2) used_comm += 0.5;
      }
      comm_cells += static_cast<long long>(k_sched) * n_mb;

      if (pruning) {
        last_grad_magnitudes.assign(static_cast<std::size_t>(k_sched), 0.0);
        for (int r = 0; r < k_sched; ++r) {
          int si = model.subnet_index_of_scheduled(r);
          if (accum[static_cast<std::size_t>(si)]) {
            last_grad_magnitudes[static_cast<std::size_t>(r)] = gradient_magnitude(
                *accum[static_cast<std::size_t>(si)], model.lora_enabled());
          }
        }
      }
      ++iteration;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = epoch_loss;
    rec.top1 = evaluate(model, dataset);
    rec.compute_fraction =
        full_units > 0 ? static_cast<double>(used_units) / static_cast<double>(full_units) : 0.0;
    rec.comm_fraction =
        comm_cells > 0 ? used_comm / static_cast<double>(comm_cells) : 0.0;
    history.epochs.push_back(rec);
  }
  return history;
}

double evaluate(const SubnetModel& model, const Dataset& dataset) {
  if (dataset.size() == 0) return 0.0;
  int correct = 0;
  for (int i = 0; i < dataset.size(); ++i) {
    Matrix logits = model.logits(dataset.samples[static_cast<std::size_t>(i)]);
    int best = 0;
    for (int j = 1; j < logits.cols; ++j) {
      if (logits(0, j) > logits(0, best)) best = j;
    }
    if (best == dataset.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / dataset.size();
}

}  // namespace d2ft
