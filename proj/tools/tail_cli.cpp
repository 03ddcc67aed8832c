// Command-line front end; all functionality lives behind the C API in
// libtail. Exit codes: 0 ok, 1 config/IO error, 2 runtime incompatibility or
// divergence, 3 property failure.

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tail/tail.h"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 7;
  bool seed_set = false;
  int threads = 1;
  bool threads_set = false;
  std::string precision;
  std::vector<std::string> overrides;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_checkpoint) {
  cmd->add_option("-c,--config", args.config_path, "JSON config file");
  cmd->add_option("-o,--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "root seed for all randomness")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--threads", args.threads, "evaluation worker threads")->each([&](const std::string&) {
    args.threads_set = true;
  });
  cmd->add_option("--precision", args.precision, "numeric precision")->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--set", args.overrides, "config override key.path=value (repeatable)");
  if (with_checkpoint) cmd->add_option("--checkpoint", args.checkpoint, "model checkpoint path");
}

int fail_with(const std::string& msg, int code) {
  std::fprintf(stderr, "tail: %s\n", msg.c_str());
  return code;
}

// Loads the config file (if any), then layers CLI flags and --set overrides
// on top. The resulting document is what the library sees.
bool build_config(const CommonArgs& args, std::string& out_json, std::string& error) {
  nlohmann::json j = nlohmann::json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) {
      error = "cannot open config file " + args.config_path;
      return false;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      error = args.config_path + " is not valid JSON: " + e.what();
      return false;
    }
  }
  if (args.seed_set || !j.contains("seed")) j["seed"] = args.seed;
  if (args.threads_set || !j.contains("threads")) j["threads"] = args.threads;
  if (!args.precision.empty()) j["precision"] = args.precision;
  j["out"] = args.out_dir;
  if (!args.checkpoint.empty()) j["checkpoint"] = args.checkpoint;
  for (const std::string& assignment : args.overrides) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      error = "--set expects key.path=value, got '" + assignment + "'";
      return false;
    }
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(assignment.substr(eq + 1));
    } catch (const nlohmann::json::exception&) {
      value = assignment.substr(eq + 1);
    }
    nlohmann::json* node = &j;
    std::string path = assignment.substr(0, eq);
    size_t start = 0;
    while (true) {
      const size_t dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  out_json = j.dump();
  return true;
}

int status_to_exit(tail_status status) {
  switch (status) {
    case TAIL_OK: return 0;
    case TAIL_ERR_INCOMPATIBLE:
    case TAIL_ERR_DIVERGED: return 2;
    case TAIL_ERR_PROPERTY: return 3;
    default: return 1;
  }
}

using ModelPtr = std::unique_ptr<tail_model, decltype(&tail_model_free)>;

int load_model(const std::string& path, ModelPtr& model) {
  tail_model* raw = nullptr;
  const tail_status st = tail_model_load(path.c_str(), &raw);
  if (st != TAIL_OK) return fail_with(std::string(tail_status_name(st)) + ": " + tail_last_error(), status_to_exit(st));
  model = ModelPtr(raw, &tail_model_free);
  return 0;
}

void print_result(char* text) {
  if (text) {
    std::printf("%s\n", text);
    tail_string_free(text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tail: transformer-based few-shot learner over episodic tasks"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, extra_args, bench_args, verify_args;
  CLI::App* train = app.add_subcommand("train", "train a model on the configured task grid");
  add_common(train, train_args, false);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out tasks");
  add_common(eval, eval_args, true);
  CLI::App* extrapolate = app.add_subcommand("extrapolate", "sweep the number of classes K at evaluation");
  add_common(extrapolate, extra_args, true);
  CLI::App* bench = app.add_subcommand("bench", "inline vs per-query efficiency benchmark");
  add_common(bench, bench_args, true);
  CLI::App* verify = app.add_subcommand("verify", "run the architectural property suite");
  add_common(verify, verify_args, true);

  CLI11_PARSE(app, argc, argv);

  std::string config, error;

  if (train->parsed()) {
    if (!build_config(train_args, config, error)) return fail_with(error, 1);
    tail_model* model = nullptr;
    const tail_status st = tail_run_train(config.c_str(), &model);
    if (model) {
      char* info = nullptr;
      if (st == TAIL_OK && tail_model_info(model, &info) == TAIL_OK) print_result(info);
      tail_model_free(model);
    }
    if (st != TAIL_OK) return fail_with(std::string(tail_status_name(st)) + ": " + tail_last_error(), status_to_exit(st));
    std::printf("checkpoint written to %s/model.tailck\n", train_args.out_dir.c_str());
    return 0;
  }

  auto run_with_model = [&](const CommonArgs& args,
                            tail_status (*fn)(const tail_model*, const char*, char**)) -> int {
    if (!build_config(args, config, error)) return fail_with(error, 1);
    ModelPtr model(nullptr, &tail_model_free);
    if (args.checkpoint.empty()) return fail_with("--checkpoint is required for this command", 1);
    if (int rc = load_model(args.checkpoint, model); rc != 0) return rc;
    char* text = nullptr;
    const tail_status st = fn(model.get(), config.c_str(), &text);
    print_result(text);
    if (st != TAIL_OK) return fail_with(std::string(tail_status_name(st)) + ": " + tail_last_error(), status_to_exit(st));
    return 0;
  };

  if (eval->parsed()) return run_with_model(eval_args, &tail_run_eval);
  if (extrapolate->parsed()) return run_with_model(extra_args, &tail_run_extrapolate);
  if (bench->parsed()) return run_with_model(bench_args, &tail_run_bench);

  if (verify->parsed()) {
    if (!build_config(verify_args, config, error)) return fail_with(error, 1);
    ModelPtr model(nullptr, &tail_model_free);
    if (!verify_args.checkpoint.empty()) {
      if (int rc = load_model(verify_args.checkpoint, model); rc != 0) return rc;
    }
    char* report = nullptr;
    const tail_status st = tail_run_verify(model.get(), config.c_str(), &report);
    print_result(report);
    if (st != TAIL_OK) return fail_with(std::string(tail_status_name(st)) + ": " + tail_last_error(), status_to_exit(st));
    return 0;
  }
  return 1;
}
