#include "checkpoint.hpp"

namespace tail {

Precision checkpoint_precision(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 13 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0)
    fail(ErrorCode::format_version_mismatch, path + " is not a TAILCK01 checkpoint");
  return bytes[12] == 0 ? Precision::f32 : Precision::f64;
}

}  // namespace tail
