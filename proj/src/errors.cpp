#include "errors.hpp"

namespace tail {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::not_scalar: return "NotScalar";
    case ErrorCode::inactive_target: return "InactiveTarget";
    case ErrorCode::unknown_label: return "UnknownLabel";
    case ErrorCode::insufficient_samples: return "InsufficientSamples";
    case ErrorCode::not_synthetic: return "NotSynthetic";
    case ErrorCode::empty_meta_dataset: return "EmptyMetaDataset";
    case ErrorCode::task_too_small: return "TaskTooSmall";
    case ErrorCode::dim_too_large: return "DimTooLarge";
    case ErrorCode::length_mismatch: return "LengthMismatch";
    case ErrorCode::too_many_labels: return "TooManyLabels";
    case ErrorCode::unmapped_label: return "UnmappedLabel";
    case ErrorCode::width_mismatch: return "WidthMismatch";
    case ErrorCode::config_mismatch: return "ConfigMismatch";
    case ErrorCode::invalid_schedule: return "InvalidSchedule";
    case ErrorCode::diverged_loss: return "DivergedLoss";
    case ErrorCode::io_failure: return "IoFailure";
    case ErrorCode::format_version_mismatch: return "FormatVersionMismatch";
    case ErrorCode::checksum_mismatch: return "ChecksumMismatch";
  }
  return "UnknownError";
}

}  // namespace tail
