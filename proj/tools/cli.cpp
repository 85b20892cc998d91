// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "d2ft/baselines.hpp"
#include "d2ft/rng.hpp"
#include "d2ft/serialize.hpp"

namespace d2ft::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool log_enabled() {
  const char* v = std::getenv("D2FT_LOG");
  return !(v && std::string(v) == "quiet");
}

void log_line(const std::string& msg) {
  if (log_enabled()) std::fprintf(stderr, "[d2ft] %s\n", msg.c_str());
}

[[noreturn]] void schema_error(const std::string& path, const std::string& why) {
  throw input_error("config schema: field '" + path + "' " + why);
}

const json* find_path(const json& root, const std::string& dotted) {
  const json* cur = &root;
  std::size_t pos = 0;
  while (pos < dotted.size()) {
    std::size_t dot = dotted.find('.', pos);
    std::string key = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &cur->at(key);
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

template <typename T>
T get_required(const json& root, const std::string& path) {
  const json* j = find_path(root, path);
  if (!j) schema_error(path, "is missing");
  try {
    return j->get<T>();
  } catch (const json::exception&) {
    schema_error(path, "has the wrong type");
  }
}

template <typename T>
T get_or(const json& root, const std::string& path, T fallback) {
  const json* j = find_path(root, path);
  if (!j) return fallback;
  try {
    return j->get<T>();
  } catch (const json::exception&) {
    schema_error(path, "has the wrong type");
  }
}

ScheduleMethod method_from_string(const std::string& name) {
  if (name == "standard") return ScheduleMethod::Standard;
  if (name == "d2ft") return ScheduleMethod::D2ft;
  if (name == "random") return ScheduleMethod::Random;
  if (name == "dpruning_m") return ScheduleMethod::DPruningM;
  if (name == "dpruning_mg") return ScheduleMethod::DPruningMG;
  if (name == "scaler") return ScheduleMethod::Scaler;
  if (name == "brute_force") return ScheduleMethod::BruteForce;
  throw config_error("unknown policy kind: " + name);
}

std::string method_to_string(ScheduleMethod m) {
  switch (m) {
    case ScheduleMethod::Standard: return "standard";
    case ScheduleMethod::D2ft: return "d2ft";
    case ScheduleMethod::Random: return "random";
    case ScheduleMethod::DPruningM: return "dpruning_m";
    case ScheduleMethod::DPruningMG: return "dpruning_mg";
    case ScheduleMethod::Scaler: return "scaler";
    case ScheduleMethod::BruteForce: return "brute_force";
  }
  return "?";
}

}  // namespace

PolicyKind RunConfig::train_policy() const {
  switch (method) {
    case ScheduleMethod::Standard: return PolicyKind::Standard;
    case ScheduleMethod::D2ft: return PolicyKind::D2FT;
    case ScheduleMethod::Random: return PolicyKind::Random;
    case ScheduleMethod::DPruningM: return PolicyKind::DPruningM;
    case ScheduleMethod::DPruningMG: return PolicyKind::DPruningMG;
    case ScheduleMethod::Scaler: return PolicyKind::Scaler;
    case ScheduleMethod::BruteForce:
      throw config_error("brute_force is a schedule-only method; pick a trainable policy");
  }
  throw config_error("unknown method");
}

RunConfig load_run_config(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw input_error("config is not valid JSON: " + path);

  RunConfig cfg;
  cfg.model.num_blocks = get_required<int>(j, "model.num_blocks");
  cfg.model.heads_per_block = get_required<int>(j, "model.heads_per_block");
  cfg.model.model_dim = get_required<int>(j, "model.model_dim");
  cfg.model.ffn_hidden = get_required<int>(j, "model.ffn_hidden");
  cfg.model.seq_len = get_required<int>(j, "model.seq_len");
  cfg.model.num_classes = get_required<int>(j, "model.num_classes");
  cfg.model.seed = get_required<std::uint64_t>(j, "model.seed");
  cfg.model.validate();

  cfg.dataset.num_samples = get_required<int>(j, "dataset.num_samples");
  cfg.dataset.num_classes = get_or<int>(j, "dataset.num_classes", cfg.model.num_classes);
  cfg.dataset.token_dim = get_or<int>(j, "dataset.token_dim", cfg.model.model_dim);
  cfg.dataset.seq_len = get_or<int>(j, "dataset.seq_len", cfg.model.seq_len);
  cfg.dataset.noise_level = get_required<double>(j, "dataset.noise_level");
  cfg.dataset.seed = get_required<std::uint64_t>(j, "dataset.seed");
  cfg.dataset.validate();
  if (cfg.dataset.token_dim != cfg.model.model_dim || cfg.dataset.seq_len != cfg.model.seq_len) {
    throw config_error("dataset token_dim/seq_len must match the model dimensions");
  }
  if (cfg.dataset.num_classes != cfg.model.num_classes) {
    throw config_error("dataset num_classes must match the model");
  }

  cfg.fwd_metric = metric_from_name(get_or<std::string>(j, "metrics.forward", "fisher_information"));
  cfg.bwd_metric = metric_from_name(get_or<std::string>(j, "metrics.backward", "weight_magnitude"));

  cfg.budget.n_full = get_required<int>(j, "budget.n_full");
  cfg.budget.n_fwd = get_required<int>(j, "budget.n_fwd");
  if (const json* ov = find_path(j, "budget.overrides")) {
    if (!ov->is_array()) schema_error("budget.overrides", "must be an array");
    for (std::size_t i = 0; i < ov->size(); ++i) {
      const json& o = (*ov)[i];
      BudgetSpec::Override entry;
      entry.device = get_required<int>(o, "device");
      entry.n_full = get_required<int>(o, "n_full");
      entry.n_fwd = get_required<int>(o, "n_fwd");
      cfg.budget.overrides.push_back(entry);
    }
  }

  cfg.lora = get_or<bool>(j, "policy.lora", false);
  if (find_path(j, "cost_model")) {
    cfg.cost_model.forward_cost = get_required<int>(j, "cost_model.forward_cost");
    cfg.cost_model.backward_cost = get_required<int>(j, "cost_model.backward_cost");
    cfg.cost_model.forward_cost_per_device =
        get_or<std::vector<int>>(j, "cost_model.forward_cost_per_device", {});
    cfg.cost_model.backward_cost_per_device =
        get_or<std::vector<int>>(j, "cost_model.backward_cost_per_device", {});
  } else if (cfg.lora) {
    cfg.cost_model = CostModel::lora_finetune();
  }
  cfg.cost_model.validate();

  cfg.method = method_from_string(get_or<std::string>(j, "policy.kind", "d2ft"));
  std::string scaler_mode = get_or<std::string>(j, "policy.scaler_mode", "constant");
  if (scaler_mode == "max") cfg.scaler = ScalerConfig::max();
  else if (scaler_mode == "min") cfg.scaler = ScalerConfig::min();
  else if (scaler_mode == "constant")
    cfg.scaler = ScalerConfig::constant(get_or<double>(j, "policy.lambda", 1.0));
  else schema_error("policy.scaler_mode", "must be max, min or constant");
  cfg.refresh_interval = get_or<int>(j, "policy.refresh_interval", 16);
  cfg.lora_rank = get_or<int>(j, "policy.lora_rank", 4);
  cfg.lora_scaling = get_or<double>(j, "policy.lora_scaling", 1.0);

  cfg.train.epochs = get_required<int>(j, "train.epochs");
  cfg.train.learning_rate = get_required<double>(j, "train.learning_rate");
  cfg.train.momentum = get_required<double>(j, "train.momentum");
  cfg.train.batch_size = get_required<int>(j, "train.batch_size");
  cfg.train.micro_batch_size = get_required<int>(j, "train.micro_batch_size");
  cfg.train.seed = get_required<std::uint64_t>(j, "train.seed");
  cfg.train.budget = cfg.budget;
  cfg.train.cost_model = cfg.cost_model;
  cfg.train.fwd_metric = cfg.fwd_metric;
  cfg.train.bwd_metric = cfg.bwd_metric;
  cfg.train.policy.scaler = cfg.scaler;
  cfg.train.policy.refresh_interval = cfg.refresh_interval;

  std::string hetero_mode = get_or<std::string>(j, "hetero.mode", "none");
  if (hetero_mode == "none") cfg.hetero.mode = HeteroConfig::Mode::None;
  else if (hetero_mode == "memory") cfg.hetero.mode = HeteroConfig::Mode::Memory;
  else if (hetero_mode == "compute") cfg.hetero.mode = HeteroConfig::Mode::Compute;
  else schema_error("hetero.mode", "must be none, memory or compute");
  cfg.hetero.count = get_or<int>(j, "hetero.count", 0);

  cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", {cfg.train.seed});
  if (cfg.seeds.empty()) schema_error("seeds", "must not be empty");
  cfg.output_dir = get_or<std::string>(j, "output_dir", "out");
  return cfg;
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"num_blocks", cfg.model.num_blocks},
                {"heads_per_block", cfg.model.heads_per_block},
                {"model_dim", cfg.model.model_dim},
                {"ffn_hidden", cfg.model.ffn_hidden},
                {"seq_len", cfg.model.seq_len},
                {"num_classes", cfg.model.num_classes},
                {"seed", cfg.model.seed}};
  j["dataset"] = {{"num_samples", cfg.dataset.num_samples},
                  {"num_classes", cfg.dataset.num_classes},
                  {"token_dim", cfg.dataset.token_dim},
                  {"seq_len", cfg.dataset.seq_len},
                  {"noise_level", cfg.dataset.noise_level},
                  {"seed", cfg.dataset.seed}};
  j["metrics"] = {{"forward", metric_name(cfg.fwd_metric)},
                  {"backward", metric_name(cfg.bwd_metric)}};
  json overrides = json::array();
  for (const auto& o : cfg.budget.overrides) {
    overrides.push_back({{"device", o.device}, {"n_full", o.n_full}, {"n_fwd", o.n_fwd}});
  }
  j["budget"] = {{"n_full", cfg.budget.n_full}, {"n_fwd", cfg.budget.n_fwd},
                 {"overrides", overrides}};
  j["cost_model"] = {{"forward_cost", cfg.cost_model.forward_cost},
                     {"backward_cost", cfg.cost_model.backward_cost},
                     {"forward_cost_per_device", cfg.cost_model.forward_cost_per_device},
                     {"backward_cost_per_device", cfg.cost_model.backward_cost_per_device}};
  j["policy"] = {{"kind", method_to_string(cfg.method)},
                 {"scaler_mode", cfg.scaler.mode == ScalerConfig::Mode::Max     ? "max"
                                 : cfg.scaler.mode == ScalerConfig::Mode::Min   ? "min"
                                                                                : "constant"},
                 {"lambda", cfg.scaler.lambda},
                 {"refresh_interval", cfg.refresh_interval},
                 {"lora", cfg.lora},
                 {"lora_rank", cfg.lora_rank},
                 {"lora_scaling", cfg.lora_scaling}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"learning_rate", cfg.train.learning_rate},
                {"momentum", cfg.train.momentum},
                {"batch_size", cfg.train.batch_size},
                {"micro_batch_size", cfg.train.micro_batch_size},
                {"seed", cfg.train.seed}};
  j["hetero"] = {{"mode", cfg.hetero.mode == HeteroConfig::Mode::None     ? "none"
                          : cfg.hetero.mode == HeteroConfig::Mode::Memory ? "memory"
                                                                          : "compute"},
                 {"count", cfg.hetero.count}};
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

namespace {

void prepare_out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  atomic_write_file(cfg.output_dir + "/resolved_config.json", resolved_config_json(cfg));
}

SubnetModel build_model(const RunConfig& cfg) {
  SubnetModel model(cfg.model);
  if (cfg.lora) model.attach_lora(cfg.lora_rank, cfg.lora_scaling);
  return model;
}

int cmd_partition(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  SubnetModel model = build_model(cfg);
  json rows = json::array();
  std::string csv = "index,name,parameters\n";
  for (int i = 0; i < model.subnet_count(); ++i) {
    const Subnet& s = model.subnet(i);
    rows.push_back({{"index", i},
                    {"name", s.id.name()},
                    {"parameters", s.parameter_count()},
                    {"base_parameters", s.base_parameter_count()}});
    csv += std::to_string(i) + "," + s.id.name() + "," + std::to_string(s.parameter_count()) +
           "\n";
  }
  json manifest;
  manifest["subnets"] = model.subnet_count();
  manifest["scheduled_subnets"] = model.scheduled_count();
  manifest["total_parameters"] = model.parameter_count();
  manifest["rows"] = std::move(rows);
  atomic_write_file(cfg.output_dir + "/partition.json", manifest.dump(2) + "\n");
  atomic_write_file(cfg.output_dir + "/partition.csv", csv);
  log_line("wrote " + cfg.output_dir + "/partition.json (" +
           std::to_string(model.subnet_count()) + " subnets)");
  return kExitOk;
}

int cmd_score(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  SubnetModel model = build_model(cfg);
  Dataset ds = make_synthetic_dataset(cfg.dataset);
  ScoreTable scores = prepass_scores(model, ds, cfg.train.micro_batch_size, cfg.fwd_metric,
                                     cfg.bwd_metric, cfg.train.threads);
  atomic_write_file(cfg.output_dir + "/scores.json", score_table_to_json(scores));
  atomic_write_file(cfg.output_dir + "/scores.csv", score_table_to_csv(scores));
  log_line("wrote " + cfg.output_dir + "/scores.json (" + std::to_string(scores.subnets) + "x" +
           std::to_string(scores.micro_batches) + ")");
  return kExitOk;
}

/// Schedules the whole score table batch by batch (units keep dataset
/// order) under the per-batch budget.
ScheduleTable schedule_all_batches(const RunConfig& cfg, const ScoreTable& scores) {
  const int n_mb = cfg.train.micro_batches_per_batch();
  if (scores.micro_batches % n_mb != 0) {
    throw input_error("score table covers " + std::to_string(scores.micro_batches) +
                      " micro-batches, not a multiple of the per-batch count " +
                      std::to_string(n_mb));
  }
  const int k = scores.subnets;
  const int batches = scores.micro_batches / n_mb;
  Capacities caps = capacities_from_budget(cfg.budget, cfg.cost_model, k, n_mb);
  std::vector<int> total_capacity(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    total_capacity[static_cast<std::size_t>(i)] =
        caps.full[static_cast<std::size_t>(i)] + caps.fwd[static_cast<std::size_t>(i)];
  }

  std::optional<DynamicPruningPolicy> pruning;
  std::optional<SubnetModel> model;
  if (cfg.method == ScheduleMethod::DPruningM || cfg.method == ScheduleMethod::DPruningMG) {
    pruning.emplace(cfg.method == ScheduleMethod::DPruningM
                        ? BaselineKind::dpruning_m(cfg.refresh_interval)
                        : BaselineKind::dpruning_mg(cfg.refresh_interval));
    model.emplace(cfg.model);
    if (cfg.lora) model->attach_lora(cfg.lora_rank, cfg.lora_scaling);
  }

  ScheduleTable out(k, scores.micro_batches);
  for (int b = 0; b < batches; ++b) {
    ScoreTable slice;
    slice.subnets = k;
    slice.micro_batches = n_mb;
    slice.fwd_metric = scores.fwd_metric;
    slice.bwd_metric = scores.bwd_metric;
    slice.forward.assign(static_cast<std::size_t>(k), {});
    slice.backward.assign(static_cast<std::size_t>(k), {});
    for (int i = 0; i < k; ++i) {
      for (int u = b * n_mb; u < (b + 1) * n_mb; ++u) {
        slice.forward[static_cast<std::size_t>(i)].push_back(scores.fwd(i, u));
        slice.backward[static_cast<std::size_t>(i)].push_back(scores.bwd(i, u));
      }
    }

    ScheduleTable batch_table;
    switch (cfg.method) {
      case ScheduleMethod::Standard:
        batch_table = ScheduleTable(k, n_mb);
        for (auto& c : batch_table.codes) c = 1;
        break;
      case ScheduleMethod::D2ft:
        batch_table = knapsack_schedule(slice, cfg.cost_model, caps, cfg.train.threads);
        break;
      case ScheduleMethod::Random:
        batch_table = random_schedule(
            cfg.budget, k, n_mb,
            splitmix64(cfg.train.seed ^ (0xB000u + static_cast<std::uint64_t>(b))));
        break;
      case ScheduleMethod::Scaler:
        batch_table =
            scaler_schedule(slice, cfg.cost_model, total_capacity, cfg.scaler, cfg.train.threads)
                .table;
        break;
      case ScheduleMethod::BruteForce:
        batch_table = brute_force_schedule(slice, cfg.cost_model, caps, cfg.train.threads);
        break;
      case ScheduleMethod::DPruningM:
      case ScheduleMethod::DPruningMG:
        batch_table = pruning->schedule(*model, {}, cfg.budget, cfg.cost_model, n_mb, b);
        break;
    }
    for (int i = 0; i < k; ++i) {
      for (int u = 0; u < n_mb; ++u) out.set_code(i, b * n_mb + u, batch_table.code(i, u));
    }
  }
  return out;
}

int cmd_schedule(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  std::string scores_path = cfg.output_dir + "/scores.json";
  if (!fs::exists(scores_path)) {
    throw input_error("missing " + scores_path + " (run the score step first)");
  }
  ScoreTable scores = score_table_from_json(read_file(scores_path));
  ScheduleTable table = schedule_all_batches(cfg, scores);
  atomic_write_file(cfg.output_dir + "/schedule.json", schedule_table_to_json(table));
  atomic_write_file(cfg.output_dir + "/schedule.csv", schedule_table_to_csv(table));
  log_line("wrote " + cfg.output_dir + "/schedule.json (method " + method_to_string(cfg.method) +
           ")");
  return kExitOk;
}

int cmd_simulate(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  std::string schedule_path = cfg.output_dir + "/schedule.json";
  if (!fs::exists(schedule_path)) {
    throw input_error("missing " + schedule_path + " (run the schedule step first)");
  }
  ScheduleTable table = schedule_table_from_json(read_file(schedule_path));
  const int k = table.devices;
  const int n_mb = cfg.train.micro_batches_per_batch();
  if (table.micro_batches % n_mb != 0) {
    throw input_error("schedule covers " + std::to_string(table.micro_batches) +
                      " micro-batches, not a multiple of the per-batch count");
  }

  std::vector<DeviceProfile> profiles;
  BudgetSpec budget = cfg.budget;
  switch (cfg.hetero.mode) {
    case HeteroConfig::Mode::None:
      for (int i = 0; i < k; ++i) profiles.push_back(DeviceProfile::standard(i));
      break;
    case HeteroConfig::Mode::Memory: {
      HeteroSetup setup = build_hetero_profiles(HeteroMode::Memory, cfg.hetero.count, k);
      profiles = std::move(setup.profiles);
      break;
    }
    case HeteroConfig::Mode::Compute: {
      HeteroSetup setup = build_hetero_profiles(HeteroMode::Compute, cfg.hetero.count, k);
      profiles = std::move(setup.profiles);
      budget = setup.budget;
      break;
    }
  }
  Capacities caps = capacities_from_budget(budget, cfg.cost_model, k, n_mb);

  const int batches = table.micro_batches / n_mb;
  const std::string method = method_to_string(cfg.method);
  std::string csv = batch_metrics_csv_header();
  json per_batch = json::array();
  double mean_compute = 0.0, mean_comm = 0.0, mean_makespan = 0.0, max_makespan = 0.0;
  double mean_variance = 0.0;
  for (int b = 0; b < batches; ++b) {
    ScheduleTable slice(k, n_mb);
    for (int i = 0; i < k; ++i)
      for (int u = 0; u < n_mb; ++u) slice.set_code(i, u, table.code(i, b * n_mb + u));
    BatchMetrics m = simulate_batch(slice, profiles, cfg.cost_model, &caps);
    std::string run_id = "batch" + std::to_string(b);
    csv += batch_metrics_to_csv_row(m, run_id, method);
    json jb;
    jb["batch"] = b;
    jb["compute_fraction"] = m.compute_fraction;
    jb["comm_fraction"] = m.comm_fraction;
    jb["workload_variance"] = m.workload_variance;
    jb["makespan_ms"] = m.makespan_ms;
    jb["imbalance_residual"] = m.imbalance_residual;
    jb["per_device_busy_ms"] = m.per_device_busy_ms;
    per_batch.push_back(std::move(jb));
    mean_compute += m.compute_fraction / batches;
    mean_comm += m.comm_fraction / batches;
    mean_makespan += m.makespan_ms / batches;
    max_makespan = std::max(max_makespan, m.makespan_ms);
    mean_variance += m.workload_variance / batches;
  }

  json out;
  out["method"] = method;
  out["devices"] = static_cast<int>(profiles.size());
  out["subnet_units"] = k;
  out["batches"] = batches;
  out["mean_compute_fraction"] = mean_compute;
  out["mean_comm_fraction"] = mean_comm;
  out["mean_workload_variance"] = mean_variance;
  out["mean_makespan_ms"] = mean_makespan;
  out["max_makespan_ms"] = max_makespan;
  out["per_batch"] = std::move(per_batch);
  atomic_write_file(cfg.output_dir + "/metrics.json", out.dump(2) + "\n");
  atomic_write_file(cfg.output_dir + "/metrics.csv", csv);
  log_line("wrote " + cfg.output_dir + "/metrics.json (" + std::to_string(batches) + " batches)");
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  Dataset ds = make_synthetic_dataset(cfg.dataset);
  json summary_runs = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    RunConfig run_cfg = cfg;
    run_cfg.model.seed = seed;
    run_cfg.train.seed = seed;
    run_cfg.train.policy.kind = cfg.train_policy();
    SubnetModel model = build_model(run_cfg);
    TrainHistory history = train(model, ds, run_cfg.train);

    std::string tag = "seed" + std::to_string(seed);
    atomic_write_file(cfg.output_dir + "/history_" + tag + ".csv", history_to_csv(history));
    atomic_write_file(cfg.output_dir + "/history_" + tag + ".json", history_to_json(history));
    model.save(cfg.output_dir + "/model_" + tag + ".ckpt");

    const EpochRecord& last = history.epochs.back();
    summary_runs.push_back({{"seed", seed},
                            {"final_loss", last.loss},
                            {"final_top1", last.top1},
                            {"compute_fraction", last.compute_fraction},
                            {"comm_fraction", last.comm_fraction}});
    log_line("trained " + tag + ": loss " + format_double(last.loss) + ", top1 " +
             format_double(last.top1));
  }
  json summary;
  summary["method"] = method_to_string(cfg.method);
  summary["lora"] = cfg.lora;
  summary["runs"] = std::move(summary_runs);
  atomic_write_file(cfg.output_dir + "/train_summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_report(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  // collect run directories (sorted for reproducible reports)
  std::vector<fs::path> run_dirs;
  for (const auto& entry : fs::directory_iterator(cfg.output_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "train_summary.json")) {
      run_dirs.push_back(entry.path());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  if (run_dirs.empty()) {
    throw input_error("no run directories with train_summary.json under " + cfg.output_dir);
  }

  std::string csv =
      "method,lora,compute_fraction,comm_fraction,seeds,final_loss_mean,final_top1_mean\n";
  json rows = json::array();
  for (const fs::path& dir : run_dirs) {
    json summary = json::parse(read_file((dir / "train_summary.json").string()));
    double loss_sum = 0.0, top1_sum = 0.0, compute = 0.0, comm = 0.0;
    int n = 0;
    for (const json& run : summary.at("runs")) {
      loss_sum += run.at("final_loss").get<double>();
      top1_sum += run.at("final_top1").get<double>();
      compute = run.at("compute_fraction").get<double>();
      comm = run.at("comm_fraction").get<double>();
      ++n;
    }
    if (n == 0) continue;
    json row;
    row["method"] = summary.at("method");
    row["lora"] = summary.value("lora", false);
    row["run_dir"] = dir.filename().string();
    row["seeds"] = n;
    row["compute_fraction"] = compute;
    row["comm_fraction"] = comm;
    row["final_loss_mean"] = loss_sum / n;
    row["final_top1_mean"] = top1_sum / n;
    if (fs::exists(dir / "metrics.json")) {
      json metrics = json::parse(read_file((dir / "metrics.json").string()));
      row["mean_workload_variance"] = metrics.value("mean_workload_variance", 0.0);
      row["mean_makespan_ms"] = metrics.value("mean_makespan_ms", 0.0);
    }
    csv += summary.at("method").get<std::string>() + "," +
           (summary.value("lora", false) ? "true" : "false") + "," + format_double(compute) +
           "," + format_double(comm) + "," + std::to_string(n) + "," +
           format_double(loss_sum / n) + "," + format_double(top1_sum / n) + "\n";
    rows.push_back(std::move(row));
  }

  // reference cost settings, with computed-vs-nominal discrepancy flags
  auto points_json = [](const std::vector<ReferencePoint>& points) {
    json arr = json::array();
    for (const ReferencePoint& p : points) {
      arr.push_back({{"setting", p.setting},
                     {"computed_pct", p.computed_pct},
                     {"nominal_pct", p.nominal_pct},
                     {"discrepancy", p.discrepancy}});
    }
    return arr;
  };
  json report;
  report["rows"] = std::move(rows);
  report["lora_compute_reference"] = points_json(lora_compute_reference_points());
  report["lora_comm_reference"] = points_json(lora_comm_reference_points());
  json notes = json::array();
  for (const ReferencePoint& p : lora_comm_reference_points()) {
    if (p.discrepancy) {
      notes.push_back("communication setting " + p.setting + " computes to " +
                      format_double(p.computed_pct) + "% but is nominally " +
                      format_double(p.nominal_pct) + "%; reporting the computed value");
    }
  }
  for (const ReferencePoint& p : lora_compute_reference_points()) {
    if (p.discrepancy) {
      notes.push_back("compute setting " + p.setting + " computes to " +
                      format_double(p.computed_pct) + "% but is nominally " +
                      format_double(p.nominal_pct) + "%; reporting the computed value");
    }
  }
  report["notes"] = std::move(notes);
  atomic_write_file(cfg.output_dir + "/report.json", report.dump(2) + "\n");
  atomic_write_file(cfg.output_dir + "/report.csv", csv);
  log_line("wrote " + cfg.output_dir + "/report.json (" + std::to_string(run_dirs.size()) +
           " runs)");
  return kExitOk;
}

int dispatch(const std::string& command, const std::string& config_path,
             const std::string& out_override, std::int64_t seed_override, int threads) {
  RunConfig cfg = load_run_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (seed_override >= 0) {
    cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
    cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  }
  cfg.train.threads = std::max(1, threads);

  if (command == "partition") return cmd_partition(cfg);
  if (command == "score") return cmd_score(cfg);
  if (command == "schedule") return cmd_schedule(cfg);
  if (command == "simulate") return cmd_simulate(cfg);
  if (command == "train") return cmd_train(cfg);
  if (command == "report") return cmd_report(cfg);
  throw config_error("unknown command: " + command);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"desk-scale dynamic fine-tuning pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int threads = 1;

  const char* names[] = {"partition", "score", "schedule", "simulate", "train", "report"};
  const char* descs[] = {
      "write the subnet manifest",
      "run the scoring pre-pass",
      "build the operation schedule from scores",
      "run the device cost simulator on a schedule",
      "fine-tune under the configured policy (one run per seed)",
      "join run summaries and metrics into a comparison report",
  };
  for (int i = 0; i < 6; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descs[i]);
    sub->add_option("--config", config_path, "run configuration JSON")->required();
    sub->add_option("--out", out_override, "output directory (overrides the config)");
    sub->add_option("--seed", seed_override, "override the run seeds with a single seed");
    sub->add_option("--threads", threads, "worker threads for scoring/scheduling");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), config_path, out_override,
                    seed_override, threads);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case errc::config: return kExitConfig;
      case errc::numeric: return kExitNumeric;
      case errc::input:
      case errc::dimension:
      case errc::state:
      case errc::size: return kExitInput;
    }
    return kExitInternal;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
}

}  // namespace d2ft::cli
