// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// File formats for the pipeline artifacts: JSON for structured data, CSV
// for tabular reports. Writers are atomic (temp file + rename) and float
// formatting is shortest-round-trip, so identical inputs produce
// byte-identical files.

#pragma once

#include <string>

#include "d2ft/cost_sim.hpp"
#include "d2ft/scheduler.hpp"
#include "d2ft/scoring.hpp"
#include "d2ft/trainer.hpp"

namespace d2ft {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

void atomic_write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);  // throws input error if missing

// --- ScoreTable ---
// JSON: {"subnets": K, "micro_batches": N, "fwd_metric": ..., "bwd_metric": ...,
//        "forward": [[...]], "backward": [[...]]}
std::string score_table_to_json(const ScoreTable& table);
ScoreTable score_table_from_json(const std::string& json_text);
// CSV: subnet_id,micro_batch,fwd,bwd
std::string score_table_to_csv(const ScoreTable& table);

// --- ScheduleTable ---
// JSON: {"devices": K, "micro_batches": N, "codes": [[...]]}
std::string schedule_table_to_json(const ScheduleTable& table);
ScheduleTable schedule_table_from_json(const std::string& json_text);
// CSV: subnet_id,micro_batch,code
std::string schedule_table_to_csv(const ScheduleTable& table);

// --- BatchMetrics ---
std::string batch_metrics_to_json(const BatchMetrics& metrics, const std::string& run_id,
                                  const std::string& method);
// CSV row: run_id,method,compute_fraction,comm_fraction,workload_variance,
//          makespan_ms,imbalance_residual
std::string batch_metrics_csv_header();
std::string batch_metrics_to_csv_row(const BatchMetrics& metrics, const std::string& run_id,
                                     const std::string& method);

// --- TrainHistory ---
// CSV: epoch,loss,top1,compute_fraction,comm_fraction
std::string history_to_csv(const TrainHistory& history);
std::string history_to_json(const TrainHistory& history);
TrainHistory history_from_csv(const std::string& csv_text);

}  // namespace d2ft
