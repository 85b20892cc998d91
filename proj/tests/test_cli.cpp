// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "cli.hpp"
#include "d2ft/serialize.hpp"
#include "json.hpp"

using namespace d2ft;
namespace fs = std::filesystem;

namespace {

int run_cli(std::initializer_list<std::string> args) {
  std::vector<const char*> argv = {"d2ft"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

void replace_once(std::string& text, const std::string& from, const std::string& to) {
  std::size_t pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
}

std::string write_config(const fs::path& dir, const std::string& kind,
                         const std::string& extra = "") {
  std::string body = R"({
  "model": {"num_blocks": 2, "heads_per_block": 2, "model_dim": 8, "ffn_hidden": 8,
            "seq_len": 4, "num_classes": 4, "seed": 1},
  "dataset": {"num_samples": 40, "noise_level": 0.5, "seed": 7},
  "budget": {"n_full": 2, "n_fwd": 2},
  "policy": {"kind": ")" + kind + R"("},
  "train": {"epochs": 2, "learning_rate": 0.05, "momentum": 0.9,
            "batch_size": 10, "micro_batch_size": 2, "seed": 3},
  "seeds": [1, 2])" + extra + R"(
})";
  fs::path p = dir / (kind + "_config.json");
  std::ofstream out(p);
  out << body;
  return p.string();
}

}  // namespace

TEST_CASE("cli pipeline writes every artifact") {
  TempDir tmp("d2ft_cli_pipeline");
  std::string cfg = write_config(tmp.path, "d2ft");
  std::string out = (tmp.path / "out").string();

  CHECK(run_cli({"partition", "--config", cfg, "--out", out}) == cli::kExitOk);
  CHECK(run_cli({"score", "--config", cfg, "--out", out}) == cli::kExitOk);
  CHECK(run_cli({"schedule", "--config", cfg, "--out", out}) == cli::kExitOk);
  CHECK(run_cli({"simulate", "--config", cfg, "--out", out}) == cli::kExitOk);
  CHECK(run_cli({"train", "--config", cfg, "--out", out}) == cli::kExitOk);

  for (const char* f : {"resolved_config.json", "partition.json", "partition.csv", "scores.json",
                        "scores.csv", "schedule.json", "schedule.csv", "metrics.json",
                        "metrics.csv", "history_seed1.csv", "history_seed2.csv",
                        "model_seed1.ckpt", "train_summary.json"}) {
    CHECK_MESSAGE(fs::exists(tmp.path / "out" / f), f);
  }

  // the schedule artifact is loadable and feasible
  ScheduleTable t = schedule_table_from_json(read_file(out + "/schedule.json"));
  CHECK(t.devices == 4);
  CHECK(t.micro_batches == 20);  // 40 samples / micro-batch 2
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("cli partition manifest for a vit-small-like split lists 74 subnets") {
  TempDir tmp("d2ft_cli_partition");
  std::string body = R"({
  "model": {"num_blocks": 12, "heads_per_block": 6, "model_dim": 24, "ffn_hidden": 48,
            "seq_len": 4, "num_classes": 10, "seed": 1},
  "dataset": {"num_samples": 40, "noise_level": 0.5, "seed": 7},
  "budget": {"n_full": 2, "n_fwd": 2},
  "train": {"epochs": 1, "learning_rate": 0.05, "momentum": 0.9,
            "batch_size": 10, "micro_batch_size": 2, "seed": 3}
})";
  fs::path cfg = tmp.path / "vit.json";
  {
    std::ofstream o(cfg);
    o << body;
  }
  std::string out = (tmp.path / "out").string();
  CHECK(run_cli({"partition", "--config", cfg.string(), "--out", out}) == cli::kExitOk);
  auto manifest = nlohmann::json::parse(read_file(out + "/partition.json"));
  CHECK(manifest["subnets"] == 74);
  CHECK(manifest["rows"].size() == 74);

  // per-block subnet parameters sum to the monolithic block count
  const int d = 24, f = 48;
  const long long block_params = 4LL * d * d + 2LL * d * f + f + d;
  long long sum = 0;
  for (const auto& row : manifest["rows"]) {
    std::string name = row["name"];
    if (name.rfind("block(1,", 0) == 0) sum += row["parameters"].get<long long>();
  }
  CHECK(sum == block_params);
}

TEST_CASE("cli errors carry distinct exit codes") {
  TempDir tmp("d2ft_cli_errors");

  SUBCASE("missing config file is an input error") {
    CHECK(run_cli({"score", "--config", (tmp.path / "nope.json").string()}) == cli::kExitInput);
  }

  SUBCASE("schema violations name the field") {
    fs::path cfg = tmp.path / "bad.json";
    {
      std::ofstream o(cfg);
      o << R"({"model": {"num_blocks": 2}})";
    }
    CHECK(run_cli({"partition", "--config", cfg.string()}) == cli::kExitInput);
  }

  SUBCASE("invalid dimensions are a config error") {
    std::string cfg = write_config(tmp.path, "d2ft");
    std::string text = read_file(cfg);
    replace_once(text, "\"model_dim\": 8", "\"model_dim\": 9");
    atomic_write_file(cfg, text);
    CHECK(run_cli({"partition", "--config", cfg}) == cli::kExitConfig);
  }

  SUBCASE("schedule before score is an input error") {
    std::string cfg = write_config(tmp.path, "d2ft");
    CHECK(run_cli({"schedule", "--config", cfg, "--out", (tmp.path / "o").string()}) ==
          cli::kExitInput);
  }

  SUBCASE("brute_force cannot train") {
    std::string cfg = write_config(tmp.path, "brute_force");
    CHECK(run_cli({"train", "--config", cfg, "--out", (tmp.path / "o").string()}) ==
          cli::kExitConfig);
  }
}

TEST_CASE("cli reruns are byte identical, including across thread counts") {
  TempDir tmp("d2ft_cli_determinism");
  std::string cfg = write_config(tmp.path, "d2ft");
  std::string out1 = (tmp.path / "a").string();
  std::string out2 = (tmp.path / "b").string();

  for (const auto& [out, threads] : {std::pair{out1, std::string("1")},
                                     std::pair{out2, std::string("4")}}) {
    REQUIRE(run_cli({"score", "--config", cfg, "--out", out, "--threads", threads}) == 0);
    REQUIRE(run_cli({"schedule", "--config", cfg, "--out", out, "--threads", threads}) == 0);
    REQUIRE(run_cli({"simulate", "--config", cfg, "--out", out, "--threads", threads}) == 0);
    REQUIRE(run_cli({"train", "--config", cfg, "--out", out, "--threads", threads}) == 0);
  }
  for (const char* f : {"scores.json", "scores.csv", "schedule.json", "schedule.csv",
                        "metrics.json", "metrics.csv", "history_seed1.csv", "history_seed2.csv",
                        "model_seed1.ckpt", "train_summary.json"}) {
    CHECK_MESSAGE(read_file(out1 + "/" + f) == read_file(out2 + "/" + f), f);
  }
}

TEST_CASE("cli report joins runs at equal budgets with identical compute fractions") {
  TempDir tmp("d2ft_cli_report");
  // a 60% budget has no forward-only pool, so both methods realize it exactly
  std::string extra = "";
  std::string cfg_d2ft = write_config(tmp.path, "d2ft", extra);
  std::string cfg_random = write_config(tmp.path, "random", extra);
  for (std::string* c : {&cfg_d2ft, &cfg_random}) {
    std::string text = read_file(*c);
    replace_once(text, "\"n_full\": 2, \"n_fwd\": 2", "\"n_full\": 3, \"n_fwd\": 0");
    atomic_write_file(*c, text);
  }
  std::string out = (tmp.path / "cmp").string();
  REQUIRE(run_cli({"train", "--config", cfg_d2ft, "--out", out + "/d2ft"}) == 0);
  REQUIRE(run_cli({"train", "--config", cfg_random, "--out", out + "/random"}) == 0);
  REQUIRE(run_cli({"report", "--config", cfg_d2ft, "--out", out}) == 0);

  auto report = nlohmann::json::parse(read_file(out + "/report.json"));
  REQUIRE(report["rows"].size() == 2);
  double cf0 = report["rows"][0]["compute_fraction"];
  double cf1 = report["rows"][1]["compute_fraction"];
  CHECK(cf0 == cf1);
  CHECK(cf0 == 0.6);

  // the comm reference table flags the nominal-90% setting
  bool flagged = false;
  for (const auto& p : report["lora_comm_reference"]) {
    if (p["computed_pct"] == 80.0) flagged = p["discrepancy"].get<bool>();
  }
  CHECK(flagged);

  // report reruns are byte-identical
  std::string first = read_file(out + "/report.csv");
  REQUIRE(run_cli({"report", "--config", cfg_d2ft, "--out", out}) == 0);
  CHECK(read_file(out + "/report.csv") == first);
}
