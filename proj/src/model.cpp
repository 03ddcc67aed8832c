#include "model.hpp"

namespace tail {

void ModelConfig::validate() const {
  if (hidden_dim < 1 || n_layers < 1 || n_heads < 1 || mlp_dim < 1 || d_data < 1 || d_label < 1 ||
      dictionary_size < 1)
    fail(ErrorCode::invalid_config, "model config: all dimensions must be positive");
  if (hidden_dim % n_heads != 0)
    fail(ErrorCode::invalid_config, "model config: hidden_dim " + std::to_string(hidden_dim) +
                                        " not divisible by n_heads " + std::to_string(n_heads));
  if (!(layer_norm_eps > 0)) fail(ErrorCode::invalid_config, "model config: layer_norm_eps must be positive");
}

ModelConfig full_scale_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 1536;
  cfg.n_layers = 16;
  cfg.n_heads = 16;
  cfg.mlp_dim = 3072;
  cfg.d_data = 1280;
  cfg.d_label = 256;
  cfg.dictionary_size = 100;
  return cfg;
}

}  // namespace tail
