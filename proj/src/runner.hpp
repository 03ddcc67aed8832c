#pragma once

#include <string>
#include <variant>

#include "checkpoint.hpp"
#include "config.hpp"
#include "evaluate.hpp"
#include "verify.hpp"

namespace tail {

// A model state of either precision; what a checkpoint loads into and what
// the C API hands out as an opaque handle.
struct AnyModelState {
  std::variant<ModelState<float>, ModelState<double>> state;

  Precision precision() const {
    return std::holds_alternative<ModelState<float>>(state) ? Precision::f32 : Precision::f64;
  }
  const ModelConfig& model_config() const;
  uint64_t episode() const;

  static AnyModelState load(const std::string& path);
  void save(const std::string& path) const;
};

struct CommandResult {
  int exit_code = 0;   // 0 ok, 1 config/io, 2 incompatibility/divergence, 3 property failure
  std::string summary; // printed by the CLI
};

// Maps a core error onto the CLI exit-code convention.
int exit_code_for(const Error& e);

// train: writes model.tailck, train_loss.csv, config.json into cfg.out_dir.
CommandResult run_train_command(const RunConfig& cfg, AnyModelState* out_state = nullptr);

// eval: writes eval_summary.csv, eval_episodes.csv, config.json.
CommandResult run_eval_command(const AnyModelState& model, const RunConfig& cfg);

// extrapolate: one summary row per K in extrapolation.csv.
CommandResult run_extrapolate_command(const AnyModelState& model, const RunConfig& cfg);

// bench: inline and per-query rows per K in bench.csv.
CommandResult run_bench_command(const AnyModelState& model, const RunConfig& cfg);

// verify: runs the property suite (fresh random model when none is given),
// one PASS/FAIL line per property in the summary and verify.txt.
CommandResult run_verify_command(const AnyModelState* model_or_null, const RunConfig& cfg);

}  // namespace tail
