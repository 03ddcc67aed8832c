#include "tail/tail.h"

#include <cstring>
#include <string>

#include "runner.hpp"

struct tail_model {
  tail::AnyModelState state;
};

namespace {

thread_local std::string g_last_error;

tail_status status_for(const tail::Error& e) {
  using tail::ErrorCode;
  switch (e.code()) {
    case ErrorCode::io_failure: return TAIL_ERR_IO;
    case ErrorCode::format_version_mismatch: return TAIL_ERR_FORMAT;
    case ErrorCode::checksum_mismatch: return TAIL_ERR_CHECKSUM;
    case ErrorCode::config_mismatch:
    case ErrorCode::dim_too_large:
    case ErrorCode::too_many_labels: return TAIL_ERR_INCOMPATIBLE;
    case ErrorCode::diverged_loss: return TAIL_ERR_DIVERGED;
    case ErrorCode::invalid_config:
    case ErrorCode::invalid_schedule:
    case ErrorCode::empty_meta_dataset:
    case ErrorCode::task_too_small: return TAIL_ERR_CONFIG;
    default: return TAIL_ERR_INVALID;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
tail_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const tail::Error& e) {
    g_last_error = e.what();
    return status_for(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TAIL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return TAIL_ERR_INTERNAL;
  }
}

tail_status parse_config(const char* config_json, tail::RunConfig& out) {
  if (!config_json) {
    g_last_error = "config_json is NULL";
    return TAIL_ERR_INVALID;
  }
  out = tail::parse_run_config_text(config_json);
  return TAIL_OK;
}

template <typename Command>
tail_status run_model_command(const tail_model* model, const char* config_json, char** out_text,
                              Command&& command) {
  return guarded([&]() -> tail_status {
    if (!model) {
      g_last_error = "model must be non-NULL";
      return TAIL_ERR_INVALID;
    }
    tail::RunConfig cfg;
    if (tail_status st = parse_config(config_json, cfg); st != TAIL_OK) return st;
    const tail::CommandResult result = command(model->state, cfg);
    if (out_text) *out_text = dup_string(result.summary);
    if (result.exit_code != 0) {
      g_last_error = result.summary;
      return result.exit_code == 3 ? TAIL_ERR_PROPERTY : TAIL_ERR_INCOMPATIBLE;
    }
    return TAIL_OK;
  });
}

}  // namespace

extern "C" {

const char* tail_version(void) { return "1.0.0"; }

const char* tail_status_name(tail_status status) {
  switch (status) {
    case TAIL_OK: return "ok";
    case TAIL_ERR_CONFIG: return "config error";
    case TAIL_ERR_IO: return "io error";
    case TAIL_ERR_FORMAT: return "format error";
    case TAIL_ERR_CHECKSUM: return "checksum mismatch";
    case TAIL_ERR_INCOMPATIBLE: return "incompatible model and tasks";
    case TAIL_ERR_DIVERGED: return "training diverged";
    case TAIL_ERR_PROPERTY: return "property failure";
    case TAIL_ERR_INVALID: return "invalid argument";
    case TAIL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* tail_last_error(void) { return g_last_error.c_str(); }

void tail_string_free(char* s) { delete[] s; }

tail_status tail_run_train(const char* config_json, tail_model** out_model) {
  return guarded([&]() -> tail_status {
    tail::RunConfig cfg;
    if (tail_status st = parse_config(config_json, cfg); st != TAIL_OK) return st;
    tail::AnyModelState state;
    const tail::CommandResult result = tail::run_train_command(cfg, &state);
    if (out_model) *out_model = new tail_model{std::move(state)};
    if (result.exit_code == 2) {
      g_last_error = result.summary;
      return TAIL_ERR_DIVERGED;
    }
    return TAIL_OK;
  });
}

tail_status tail_model_load(const char* path, tail_model** out_model) {
  return guarded([&]() -> tail_status {
    if (!path || !out_model) {
      g_last_error = "path and out_model must be non-NULL";
      return TAIL_ERR_INVALID;
    }
    *out_model = new tail_model{tail::AnyModelState::load(path)};
    return TAIL_OK;
  });
}

tail_status tail_model_save(const tail_model* model, const char* path) {
  return guarded([&]() -> tail_status {
    if (!model || !path) {
      g_last_error = "model and path must be non-NULL";
      return TAIL_ERR_INVALID;
    }
    model->state.save(path);
    return TAIL_OK;
  });
}

void tail_model_free(tail_model* model) { delete model; }

tail_status tail_model_info(const tail_model* model, char** out_json) {
  return guarded([&]() -> tail_status {
    if (!model || !out_json) {
      g_last_error = "model and out_json must be non-NULL";
      return TAIL_ERR_INVALID;
    }
    nlohmann::json j;
    j["model"] = tail::model_config_to_json(model->state.model_config());
    j["precision"] = tail::precision_name(model->state.precision());
    j["episodes_trained"] = model->state.episode();
    *out_json = dup_string(j.dump(2));
    return TAIL_OK;
  });
}

tail_status tail_run_eval(const tail_model* model, const char* config_json, char** out_summary) {
  return run_model_command(model, config_json, out_summary, tail::run_eval_command);
}

tail_status tail_run_extrapolate(const tail_model* model, const char* config_json, char** out_summary) {
  return run_model_command(model, config_json, out_summary, tail::run_extrapolate_command);
}

tail_status tail_run_bench(const tail_model* model, const char* config_json, char** out_summary) {
  return run_model_command(model, config_json, out_summary, tail::run_bench_command);
}

tail_status tail_run_verify(const tail_model* model, const char* config_json, char** out_report) {
  return guarded([&]() -> tail_status {
    tail::RunConfig cfg;
    if (tail_status st = parse_config(config_json, cfg); st != TAIL_OK) return st;
    const tail::CommandResult result =
        tail::run_verify_command(model ? &model->state : nullptr, cfg);
    if (out_report) *out_report = dup_string(result.summary);
    if (result.exit_code == 3) {
      g_last_error = "one or more properties failed";
      return TAIL_ERR_PROPERTY;
    }
    return TAIL_OK;
  });
}

}  // extern "C"
