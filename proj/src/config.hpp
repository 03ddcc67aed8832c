#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "model.hpp"
#include "task.hpp"
#include "trainer.hpp"

namespace tail {

enum class Precision { f32, f64 };

struct TaskSourceConfig {
  std::string source = "synthetic";  // "synthetic" | "file"
  // synthetic grid
  int count = 64;
  int d_min = 8, d_max = 32;
  int classes_min = 5, classes_max = 8;
  double separation = 1.0;
  double sigma = 1.0;
  double min_pairwise_distance = 0.0;
  // file-backed store
  std::string path;
  std::string format = "auto";  // "auto" | "binary" | "csv"
  std::vector<std::string> labels;
};

struct EvalConfig {
  uint64_t episodes = 1000;
  int shots = 5;
  int ways = 5;
  int queries_per_class = 5;
};

struct ExtrapolateConfig {
  std::vector<int> ways = {2, 5, 10, 20, 50};
  int shots = 1;
  uint64_t episodes = 1000;
  int queries_per_class = 1;
};

struct BenchConfig {
  std::vector<int> ways = {2, 5, 10, 20};
  int shots = 1;
  int queries_per_class = 5;
  uint64_t episodes = 100;
};

struct VerifyConfig {
  int episodes = 200;
  int permutations = 5;
  int uniformity_draws = 100000;
  int coverage_episodes = 4000;
  bool gradcheck = true;
};

// One fully-resolved run; every command reads the parts it needs. A snapshot
// of this document is written next to the outputs of every run.
struct RunConfig {
  uint64_t seed = 7;
  int threads = 1;
  Precision precision = Precision::f32;
  std::string out_dir = "out";
  std::string checkpoint;  // input checkpoint for eval/extrapolate/bench/verify
  std::string resume;      // optional checkpoint to resume training from
  ModelConfig model;
  TaskSourceConfig tasks;
  std::optional<TaskSourceConfig> eval_tasks;  // defaults to `tasks` under the eval seed stream
  TrainerConfig trainer;
  EvalConfig eval;
  ExtrapolateConfig extrapolate;
  BenchConfig bench;
  VerifyConfig verify;
};

// Parses a config document, rejecting unknown keys anywhere in the tree.
RunConfig parse_run_config(const nlohmann::json& j);

RunConfig parse_run_config_text(const std::string& text);

// The fully-resolved document (all defaults materialized).
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Applies one dotted-path override, e.g. "trainer.episodes=0". The value is
// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

const char* precision_name(Precision p);

// Builds the task population for a run. Synthetic grids derive their seed
// from the run seed under the "tasks" (train) or "eval-tasks" stream.
MetaDataset build_meta(const TaskSourceConfig& cfg, uint64_t run_seed, bool eval_split);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json trainer_config_to_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const nlohmann::json& j);

}  // namespace tail
