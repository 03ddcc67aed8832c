#pragma once

#include <stdexcept>
#include <string>

namespace tail {

enum class ErrorCode {
  invalid_config,
  shape_mismatch,
  not_scalar,
  inactive_target,
  unknown_label,
  insufficient_samples,
  not_synthetic,
  empty_meta_dataset,
  task_too_small,
  dim_too_large,
  length_mismatch,
  too_many_labels,
  unmapped_label,
  width_mismatch,
  config_mismatch,
  invalid_schedule,
  diverged_loss,
  io_failure,
  format_version_mismatch,
  checksum_mismatch,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

}  // namespace tail
