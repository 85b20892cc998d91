// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/serialize.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace d2ft {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot open for writing: " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw input_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw input_error("cannot move into place: " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw input_error(std::string(what) + ": malformed JSON");
  return j;
}

template <typename T>
T require_field(const json& j, const char* field, const char* what) {
  if (!j.contains(field)) {
    throw input_error(std::string(what) + ": missing field '" + field + "'");
  }
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw input_error(std::string(what) + ": field '" + field + "' has the wrong type");
  }
}

}  // namespace

std::string score_table_to_json(const ScoreTable& table) {
  json j;
  j["subnets"] = table.subnets;
  j["micro_batches"] = table.micro_batches;
  j["fwd_metric"] = metric_name(table.fwd_metric);
  j["bwd_metric"] = metric_name(table.bwd_metric);
  j["forward"] = table.forward;
  j["backward"] = table.backward;
  return j.dump(2) + "\n";
}

ScoreTable score_table_from_json(const std::string& json_text) {
  json j = parse_json(json_text, "score table");
  ScoreTable t;
  t.subnets = require_field<int>(j, "subnets", "score table");
  t.micro_batches = require_field<int>(j, "micro_batches", "score table");
  t.fwd_metric = metric_from_name(require_field<std::string>(j, "fwd_metric", "score table"));
  t.bwd_metric = metric_from_name(require_field<std::string>(j, "bwd_metric", "score table"));
  t.forward = require_field<std::vector<std::vector<double>>>(j, "forward", "score table");
  t.backward = require_field<std::vector<std::vector<double>>>(j, "backward", "score table");
  t.validate();
  return t;
}

std::string score_table_to_csv(const ScoreTable& table) {
  std::string out = "subnet_id,micro_batch,fwd,bwd\n";
  for (int k = 0; k < table.subnets; ++k) {
    for (int i = 0; i < table.micro_batches; ++i) {
      out += std::to_string(k) + "," + std::to_string(i) + "," + format_double(table.fwd(k, i)) +
             "," + format_double(table.bwd(k, i)) + "\n";
    }
  }
  return out;
}

std::string schedule_table_to_json(const ScheduleTable& table) {
  json rows = json::array();
  for (int k = 0; k < table.devices; ++k) {
    json row = json::array();
    for (int i = 0; i < table.micro_batches; ++i) row.push_back(static_cast<int>(table.code(k, i)));
    rows.push_back(std::move(row));
  }
  json j;
  j["devices"] = table.devices;
  j["micro_batches"] = table.micro_batches;
  j["codes"] = std::move(rows);
  return j.dump(2) + "\n";
}

ScheduleTable schedule_table_from_json(const std::string& json_text) {
  json j = parse_json(json_text, "schedule table");
  int devices = require_field<int>(j, "devices", "schedule table");
  int micro_batches = require_field<int>(j, "micro_batches", "schedule table");
  auto rows = require_field<std::vector<std::vector<int>>>(j, "codes", "schedule table");
  if (static_cast<int>(rows.size()) != devices) {
    throw input_error("schedule table: codes row count mismatch");
  }
  ScheduleTable t(devices, micro_batches);
  for (int k = 0; k < devices; ++k) {
    if (static_cast<int>(rows[static_cast<std::size_t>(k)].size()) != micro_batches) {
      throw input_error("schedule table: codes column count mismatch");
    }
    for (int i = 0; i < micro_batches; ++i) {
      int c = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      if (c < 1 || c > 3) throw input_error("schedule table: code out of range");
      t.set_code(k, i, static_cast<std::uint8_t>(c));
    }
  }
  return t;
}

std::string schedule_table_to_csv(const ScheduleTable& table) {
  std::string out = "subnet_id,micro_batch,code\n";
  for (int k = 0; k < table.devices; ++k) {
    for (int i = 0; i < table.micro_batches; ++i) {
      out += std::to_string(k) + "," + std::to_string(i) + "," +
             std::to_string(static_cast<int>(table.code(k, i))) + "\n";
    }
  }
  return out;
}

std::string batch_metrics_to_json(const BatchMetrics& metrics, const std::string& run_id,
                                  const std::string& method) {
  json j;
  j["run_id"] = run_id;
  j["method"] = method;
  j["compute_fraction"] = metrics.compute_fraction;
  j["comm_fraction"] = metrics.comm_fraction;
  j["workload_variance"] = metrics.workload_variance;
  j["makespan_ms"] = metrics.makespan_ms;
  j["per_device_busy_ms"] = metrics.per_device_busy_ms;
  j["imbalance_residual"] = metrics.imbalance_residual;
  return j.dump(2) + "\n";
}

std::string batch_metrics_csv_header() {
  return "run_id,method,compute_fraction,comm_fraction,workload_variance,makespan_ms,"
         "imbalance_residual\n";
}

std::string batch_metrics_to_csv_row(const BatchMetrics& metrics, const std::string& run_id,
                                     const std::string& method) {
  return run_id + "," + method + "," + format_double(metrics.compute_fraction) + "," +
         format_double(metrics.comm_fraction) + "," + format_double(metrics.workload_variance) +
         "," + format_double(metrics.makespan_ms) + "," +
         format_double(metrics.imbalance_residual) + "\n";
}

std::string history_to_csv(const TrainHistory& history) {
  std::string out = "epoch,loss,top1,compute_fraction,comm_fraction\n";
  for (const EpochRecord& r : history.epochs) {
    out += std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.top1) +
           "," + format_double(r.compute_fraction) + "," + format_double(r.comm_fraction) + "\n";
  }
  return out;
}

std::string history_to_json(const TrainHistory& history) {
  json epochs = json::array();
  for (const EpochRecord& r : history.epochs) {
    json e;
    e["epoch"] = r.epoch;
    e["loss"] = r.loss;
    e["top1"] = r.top1;
    e["compute_fraction"] = r.compute_fraction;
    e["comm_fraction"] = r.comm_fraction;
    epochs.push_back(std::move(e));
  }
  json j;
  j["epochs"] = std::move(epochs);
  return j.dump(2) + "\n";
}

TrainHistory history_from_csv(const std::string& csv_text) {
  TrainHistory h;
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw input_error("history csv: empty file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    std::istringstream ls(line);
    std::string field;
    auto next = [&]() {
      if (!std::getline(ls, field, ',')) throw input_error("history csv: short row");
      return field;
    };
    r.epoch = std::stoi(next());
    r.loss = std::stod(next());
    r.top1 = std::stod(next());
    r.compute_fraction = std::stod(next());
    r.comm_fraction = std::stod(next());
    h.epochs.push_back(r);
  }
  return h;
}

}  // namespace d2ft
