// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/scoring.hpp"

#include <cmath>

#include "d2ft/threading.hpp"

namespace d2ft {

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::FisherInformation: return "fisher_information";
    case Metric::WeightMagnitude: return "weight_magnitude";
    case Metric::GradientMagnitude: return "gradient_magnitude";
    case Metric::TaylorImportance: return "taylor_importance";
  }
  return "?";
}

Metric metric_from_name(const std::string& name) {
  if (name == "fisher_information") return Metric::FisherInformation;
  if (name == "weight_magnitude") return Metric::WeightMagnitude;
  if (name == "gradient_magnitude") return Metric::GradientMagnitude;
  if (name == "taylor_importance") return Metric::TaylorImportance;
  throw config_error("unknown metric: " + name);
}

void ScoreTable::validate() const {
  auto check_side = [&](const std::vector<std::vector<double>>& side, const char* what) {
    if (static_cast<int>(side.size()) != subnets) {
      throw input_error(std::string(what) + " scores: row count mismatch");
    }
    for (const auto& row : side) {
      if (static_cast<int>(row.size()) != micro_batches) {
        throw input_error(std::string(what) + " scores: column count mismatch");
      }
      for (double v : row) {
        if (!std::isfinite(v)) throw numeric_error("score table contains non-finite entries");
        if (v < 0.0) throw numeric_error("score table contains negative entries");
      }
    }
  };
  check_side(forward, "forward");
  check_side(backward, "backward");
}

namespace {

double check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw numeric_error(std::string(what) + " produced a non-finite score");
  return v;
}

}  // namespace

double fisher_score(const Subnet& grads, bool lora_mode) {
  double s = 0.0;
  visit_trainable(grads, lora_mode, [&](const char*, const Matrix& m) {
    for (double v : m.data) s += v * v;
  });
  return check_finite(s, "fisher_score");
}

double weight_magnitude(const Subnet& weights, bool lora_mode) {
  double s = 0.0;
  visit_trainable(weights, lora_mode, [&](const char*, const Matrix& m) {
    for (double v : m.data) s += std::abs(v);
  });
  return check_finite(s, "weight_magnitude");
}

double gradient_magnitude(const Subnet& grads, bool lora_mode) {
  double s = 0.0;
  visit_trainable(grads, lora_mode, [&](const char*, const Matrix& m) {
    for (double v : m.data) s += std::abs(v);
  });
  return check_finite(s, "gradient_magnitude");
}

double taylor_importance(const Subnet& weights, const Subnet& grads, bool lora_mode) {
  double s = 0.0;
  // weights and grads share tensor order, so walk them in lockstep by name
  std::vector<const Matrix*> wm, gm;
  visit_trainable(weights, lora_mode, [&](const char*, const Matrix& m) { wm.push_back(&m); });
  visit_trainable(grads, lora_mode, [&](const char*, const Matrix& m) { gm.push_back(&m); });
  if (wm.size() != gm.size()) throw input_error("taylor_importance: tensor lists differ");
  for (std::size_t t = 0; t < wm.size(); ++t) {
    if (wm[t]->size() != gm[t]->size()) throw dimension_error("taylor_importance: shape mismatch");
    for (std::size_t i = 0; i < wm[t]->data.size(); ++i) {
      s += std::abs(wm[t]->data[i] * gm[t]->data[i]);
    }
  }
  return check_finite(s, "taylor_importance");
}

double metric_value(Metric m, const Subnet& weights, const Subnet& grads, bool lora_mode) {
  switch (m) {
    case Metric::FisherInformation: return fisher_score(grads, lora_mode);
    case Metric::WeightMagnitude: return weight_magnitude(weights, lora_mode);
    case Metric::GradientMagnitude: return gradient_magnitude(grads, lora_mode);
    case Metric::TaylorImportance: return taylor_importance(weights, grads, lora_mode);
  }
  throw config_error("unknown metric");
}

ScoreTable prepass_scores(const SubnetModel& model, const Dataset& dataset, int micro_batch_size,
                          Metric fwd_metric, Metric bwd_metric, int threads) {
  if (dataset.size() == 0) throw input_error("prepass_scores: empty dataset");
  int n_units = dataset.micro_batch_count(micro_batch_size);
  int k = model.scheduled_count();
  // validate up front: the scoring workers must not throw
  for (const Matrix& sample : dataset.samples) {
    check_shape(sample, model.config().seq_len, model.config().model_dim, "prepass sample");
  }
  if (static_cast<int>(dataset.labels.size()) != dataset.size()) {
    throw input_error("prepass_scores: labels/samples length mismatch");
  }
  for (int label : dataset.labels) {
    if (label < 0 || label >= model.config().num_classes) {
      throw input_error("prepass_scores: label out of range");
    }
  }

  ScoreTable table;
  table.subnets = k;
  table.micro_batches = n_units;
  table.fwd_metric = fwd_metric;
  table.bwd_metric = bwd_metric;
  table.forward.assign(static_cast<std::size_t>(k), std::vector<double>(n_units, 0.0));
  table.backward.assign(static_cast<std::size_t>(k), std::vector<double>(n_units, 0.0));

  std::vector<OperationKind> all_full(static_cast<std::size_t>(k), OperationKind::Full);
  parallel_for(n_units, threads, [&](int unit) {
    ForwardBackwardResult fb = model.forward_backward(
        dataset.unit_inputs(unit, micro_batch_size), dataset.unit_labels(unit, micro_batch_size),
        all_full);
    for (int r = 0; r < k; ++r) {
      int si = model.subnet_index_of_scheduled(r);
      const Subnet& weights = model.subnet(si);
      const Subnet& grads = *fb.grads[static_cast<std::size_t>(si)];
      table.forward[static_cast<std::size_t>(r)][static_cast<std::size_t>(unit)] =
          metric_value(fwd_metric, weights, grads, model.lora_enabled());
      table.backward[static_cast<std::size_t>(r)][static_cast<std::size_t>(unit)] =
          metric_value(bwd_metric, weights, grads, model.lora_enabled());
    }
  });
  table.validate();
  return table;
}

}  // namespace d2ft
