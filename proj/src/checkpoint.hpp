#pragma once

#include <string>

#include "binio.hpp"
#include "config.hpp"
#include "trainer.hpp"

// Checkpoint format "TAILCK01": versioned header, embedded config document,
// named parameter table with shapes, parameter and Adam-moment payloads in
// the model's precision (f32 by default), trailing CRC32 over everything
// before it. The round trip is bitwise lossless.

namespace tail {

namespace detail {
constexpr char kCheckpointMagic[8] = {'T', 'A', 'I', 'L', 'C', 'K', '0', '1'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
constexpr uint8_t dtype_tag() {
  return sizeof(S) == 4 ? 0 : 1;
}

template <typename S>
void write_payload(ByteWriter& w, const std::vector<S>& values) {
  for (S v : values) {
    if constexpr (sizeof(S) == 4)
      w.f32(static_cast<float>(v));
    else
      w.f64(static_cast<double>(v));
  }
}

template <typename S>
void read_payload(ByteReader& r, uint8_t dtype, std::vector<S>& values) {
  for (S& v : values) v = dtype == 0 ? static_cast<S>(r.f32()) : static_cast<S>(r.f64());
}
}  // namespace detail

// Reads just enough of the header to report the stored precision.
Precision checkpoint_precision(const std::string& path);

template <typename S>
void save_checkpoint(const ModelState<S>& state, const std::string& path) {
  ByteWriter w;
  w.raw(detail::kCheckpointMagic, 8);
  w.u32(detail::kCheckpointVersion);
  w.u8(detail::dtype_tag<S>());

  nlohmann::json meta;
  meta["model"] = model_config_to_json(state.model.config);
  meta["trainer"] = trainer_config_to_json(state.trainer);
  meta["seed"] = state.seed;
  w.str(meta.dump());

  w.u64(state.episode);
  w.u64(state.opt.step);
  w.u32(static_cast<uint32_t>(state.model.dict.active_count));

  const auto params = state.model.named_parameters();
  if (params.size() != state.opt.m.size())
    fail(ErrorCode::config_mismatch, "save_checkpoint: optimizer moments vs parameters");
  w.u32(static_cast<uint32_t>(params.size()));
  for (size_t p = 0; p < params.size(); ++p) {
    const auto& [name, t] = params[p];
    w.str(name);
    w.u32(static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) w.u32(static_cast<uint32_t>(d));
    detail::write_payload(w, t.values());
    detail::write_payload(w, state.opt.m[p]);
    detail::write_payload(w, state.opt.v[p]);
  }

  ByteWriter out = std::move(w);
  const uint32_t crc = crc32(out.bytes().data(), out.bytes().size());
  out.u32(crc);
  write_file_bytes(path, out.bytes());
}

template <typename S>
ModelState<S> load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0)
    fail(ErrorCode::format_version_mismatch, path + " is not a TAILCK01 checkpoint");
  const size_t body = bytes.size() - 4;
  ByteReader crc_reader(bytes.data() + body, 4);
  if (crc32(bytes.data(), body) != crc_reader.u32())
    fail(ErrorCode::checksum_mismatch, path + ": CRC32 mismatch (truncated or corrupted file)");

  ByteReader r(bytes.data() + 8, body - 8);
  const uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion)
    fail(ErrorCode::format_version_mismatch,
         path + ": checkpoint version " + std::to_string(version) + ", expected " +
             std::to_string(detail::kCheckpointVersion));
  const uint8_t dtype = r.u8();
  if (dtype > 1) fail(ErrorCode::format_version_mismatch, path + ": unknown payload dtype");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format_version_mismatch, path + ": bad embedded config: " + e.what());
  }

  ModelState<S> state;
  const ModelConfig mcfg = model_config_from_json(meta.at("model"));
  state.trainer = trainer_config_from_json(meta.at("trainer"));
  state.seed = meta.at("seed").get<uint64_t>();
  state.episode = r.u64();
  const uint64_t adam_step = r.u64();
  const int active_count = static_cast<int>(r.u32());

  Rng init_rng(derive_seed(state.seed, "model-init", 0));
  state.model = TailModel<S>::init(mcfg, init_rng);
  state.model.dict.active_count = active_count;

  auto params = state.model.named_parameters();
  state.opt = AdamState<S>::init(params);
  state.opt.step = adam_step;

  const uint32_t count = r.u32();
  if (count != params.size())
    fail(ErrorCode::format_version_mismatch, path + ": parameter count mismatch with model config");
  for (uint32_t p = 0; p < count; ++p) {
    const std::string name = r.str();
    if (name != params[p].first)
      fail(ErrorCode::format_version_mismatch, path + ": parameter '" + name + "', expected '" + params[p].first + "'");
    const uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.u32());
    Tensor<S>& t = params[p].second;
    if (shape != t.shape())
      fail(ErrorCode::format_version_mismatch, path + ": parameter '" + name + "' has shape " + shape_str(shape) +
                                                   ", model expects " + shape_str(t.shape()));
    detail::read_payload(r, dtype, t.values());
    detail::read_payload(r, dtype, state.opt.m[p]);
    detail::read_payload(r, dtype, state.opt.v[p]);
  }
  if (r.remaining() != 0) fail(ErrorCode::format_version_mismatch, path + ": trailing bytes after parameter table");
  return state;
}

}  // namespace tail
