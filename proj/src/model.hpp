#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "episode.hpp"
#include "labels.hpp"
#include "tensor.hpp"

namespace tail {

struct ModelConfig {
  int hidden_dim = 128;
  int n_layers = 4;
  int n_heads = 4;
  int mlp_dim = 256;
  int d_data = 64;
  int d_label = 32;
  int dictionary_size = 64;  // M
  bool causal_mask = false;  // ablation
  double layer_norm_eps = 1e-5;

  int token_width() const { return d_data + d_label; }
  void validate() const;
};

// The paper-scale configuration; the defaults above are the desk-scale one.
ModelConfig full_scale_config();

// Support rows first, then query rows; query rows carry the class marker in
// the label slot. No positional information of any kind is attached.
template <typename S>
struct TokenSequence {
  Tensor<S> tokens;  // (n + q) x (d_data + d_label)
  int n_support = 0;
  int n_query = 0;

  int rows() const { return n_support + n_query; }
};

struct ForwardStats {
  uint64_t forward_passes = 0;
  uint64_t attn_score_elements = 0;  // sum over layers of rows^2
};

template <typename S>
struct EncoderBlock {
  Tensor<S> ln1_gain, ln1_bias;
  Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<S> ln2_gain, ln2_bias;
  Tensor<S> w1, b1, w2, b2;
};

// The demonstration-conditioned inference function: a non-causal transformer
// encoder over support and query tokens with a linear score head over the
// dictionary indices.
template <typename S>
struct TailModel {
  ModelConfig config;
  Tensor<S> in_w, in_b;  // token_width -> hidden
  std::vector<EncoderBlock<S>> blocks;
  Tensor<S> lnf_gain, lnf_bias;
  Tensor<S> score_w, score_b;  // hidden -> M
  EmbeddingDictionary<S> dict;

  static TailModel init(const ModelConfig& cfg, Rng& rng);

  // Stable enumeration order; used by the optimizer and the checkpoint.
  std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const;
  void zero_grad() const;
};

// Attention layout: support rows attend to all support rows; query rows
// attend to all support rows and to themselves only. This keeps every query's
// scores independent of the other queries in the sequence, which is what
// makes inline multi-query processing equal to per-query passes. The causal
// ablation replaces this with a standard lower-triangular mask.
std::vector<uint8_t> attention_mask(int n_support, int n_query, bool causal);

template <typename S>
TokenSequence<S> assemble_sequence(const std::vector<std::vector<double>>& projected_support,
                                   const std::vector<int>& support_dict_indices,
                                   const std::vector<std::vector<double>>& projected_queries,
                                   const EmbeddingDictionary<S>& dict, int d_data);

template <typename S>
Tensor<S> forward(const TailModel<S>& model, const TokenSequence<S>& seq, ForwardStats* stats = nullptr);

// Full composition for one episode: project features, embed labels, assemble,
// run the encoder, classify each query under the episode's injection.
template <typename S>
std::vector<LabelId> predict(const TailModel<S>& model, const Episode& episode, ForwardStats* stats = nullptr);

// Same predictions via one forward pass per query (q passes of n+1 rows).
template <typename S>
std::vector<LabelId> predict_per_query(const TailModel<S>& model, const Episode& episode,
                                       ForwardStats* stats = nullptr);

// Scores for every query, inline in one sequence.
template <typename S>
Tensor<S> episode_scores(const TailModel<S>& model, const Episode& episode, ForwardStats* stats = nullptr);

// ---- implementation ----

template <typename S>
TailModel<S> TailModel<S>::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  TailModel<S> m;
  m.config = cfg;
  const int h = cfg.hidden_dim;
  const int w = cfg.token_width();
  m.in_w = randn<S>({w, h}, rng, 1.0 / std::sqrt(static_cast<double>(w)));
  m.in_b = Tensor<S>::zeros({h}, true);
  const double hs = 1.0 / std::sqrt(static_cast<double>(h));
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderBlock<S> b;
    b.ln1_gain = Tensor<S>::full({h}, S(1), true);
    b.ln1_bias = Tensor<S>::zeros({h}, true);
    b.wq = randn<S>({h, h}, rng, hs);
    b.bq = Tensor<S>::zeros({h}, true);
    b.wk = randn<S>({h, h}, rng, hs);
    b.bk = Tensor<S>::zeros({h}, true);
    b.wv = randn<S>({h, h}, rng, hs);
    b.bv = Tensor<S>::zeros({h}, true);
    b.wo = randn<S>({h, h}, rng, hs);
    b.bo = Tensor<S>::zeros({h}, true);
    b.ln2_gain = Tensor<S>::full({h}, S(1), true);
    b.ln2_bias = Tensor<S>::zeros({h}, true);
    b.w1 = randn<S>({h, cfg.mlp_dim}, rng, hs);
    b.b1 = Tensor<S>::zeros({cfg.mlp_dim}, true);
    b.w2 = randn<S>({cfg.mlp_dim, h}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.mlp_dim)));
    b.b2 = Tensor<S>::zeros({h}, true);
    m.blocks.push_back(std::move(b));
  }
  m.lnf_gain = Tensor<S>::full({h}, S(1), true);
  m.lnf_bias = Tensor<S>::zeros({h}, true);
  m.score_w = randn<S>({h, cfg.dictionary_size}, rng, hs);
  m.score_b = Tensor<S>::zeros({cfg.dictionary_size}, true);
  m.dict = EmbeddingDictionary<S>::init(cfg.dictionary_size, cfg.d_label, rng);
  return m;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>>> TailModel<S>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<S>>> params;
  params.emplace_back("in.w", in_w);
  params.emplace_back("in.b", in_b);
  for (size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    const EncoderBlock<S>& b = blocks[l];
    params.emplace_back(p + "ln1.gain", b.ln1_gain);
    params.emplace_back(p + "ln1.bias", b.ln1_bias);
    params.emplace_back(p + "attn.wq", b.wq);
    params.emplace_back(p + "attn.bq", b.bq);
    params.emplace_back(p + "attn.wk", b.wk);
    params.emplace_back(p + "attn.bk", b.bk);
    params.emplace_back(p + "attn.wv", b.wv);
    params.emplace_back(p + "attn.bv", b.bv);
    params.emplace_back(p + "attn.wo", b.wo);
    params.emplace_back(p + "attn.bo", b.bo);
    params.emplace_back(p + "ln2.gain", b.ln2_gain);
    params.emplace_back(p + "ln2.bias", b.ln2_bias);
    params.emplace_back(p + "mlp.w1", b.w1);
    params.emplace_back(p + "mlp.b1", b.b1);
    params.emplace_back(p + "mlp.w2", b.w2);
    params.emplace_back(p + "mlp.b2", b.b2);
  }
  params.emplace_back("lnf.gain", lnf_gain);
  params.emplace_back("lnf.bias", lnf_bias);
  params.emplace_back("score.w", score_w);
  params.emplace_back("score.b", score_b);
  params.emplace_back("dict.embeddings", dict.embeddings);
  params.emplace_back("dict.marker", dict.query_marker);
  return params;
}

template <typename S>
void TailModel<S>::zero_grad() const {
  for (auto& [name, t] : named_parameters()) const_cast<Tensor<S>&>(t).zero_grad();
}

template <typename S>
TokenSequence<S> assemble_sequence(const std::vector<std::vector<double>>& projected_support,
                                   const std::vector<int>& support_dict_indices,
                                   const std::vector<std::vector<double>>& projected_queries,
                                   const EmbeddingDictionary<S>& dict, int d_data) {
  if (projected_support.size() != support_dict_indices.size())
    fail(ErrorCode::length_mismatch, "assemble_sequence: one dictionary index per support row");
  if (projected_queries.empty()) fail(ErrorCode::invalid_config, "assemble_sequence: need at least one query");
  const int n = static_cast<int>(projected_support.size());
  const int q = static_cast<int>(projected_queries.size());
  for (const auto& f : projected_support)
    if (static_cast<int>(f.size()) != d_data) fail(ErrorCode::width_mismatch, "assemble_sequence: support feature width");
  for (const auto& f : projected_queries)
    if (static_cast<int>(f.size()) != d_data) fail(ErrorCode::width_mismatch, "assemble_sequence: query feature width");

  std::vector<S> feat(static_cast<size_t>(n + q) * d_data);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d_data; ++j) feat[static_cast<size_t>(i) * d_data + j] = static_cast<S>(projected_support[i][j]);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < d_data; ++j)
      feat[static_cast<size_t>(n + i) * d_data + j] = static_cast<S>(projected_queries[i][j]);
  Tensor<S> features = Tensor<S>::from({n + q, d_data}, std::move(feat));

  Tensor<S> labels;
  if (n > 0) {
    Tensor<S> support_labels = gather_rows(dict.embeddings, support_dict_indices);
    labels = concat_rows(support_labels, repeat_row(dict.query_marker, q));
  } else {
    labels = repeat_row(dict.query_marker, q);
  }

  TokenSequence<S> seq;
  seq.tokens = concat_cols(features, labels);
  seq.n_support = n;
  seq.n_query = q;
  return seq;
}

inline std::vector<uint8_t> attention_mask(int n_support, int n_query, bool causal) {
  const int t = n_support + n_query;
  std::vector<uint8_t> mask(static_cast<size_t>(t) * t, 0);
  if (causal) {
    for (int i = 0; i < t; ++i)
      for (int j = 0; j <= i; ++j) mask[static_cast<size_t>(i) * t + j] = 1;
    return mask;
  }
  for (int i = 0; i < n_support; ++i)
    for (int j = 0; j < n_support; ++j) mask[static_cast<size_t>(i) * t + j] = 1;
  for (int i = n_support; i < t; ++i) {
    for (int j = 0; j < n_support; ++j) mask[static_cast<size_t>(i) * t + j] = 1;
    mask[static_cast<size_t>(i) * t + i] = 1;
  }
  return mask;
}

template <typename S>
Tensor<S> forward(const TailModel<S>& model, const TokenSequence<S>& seq, ForwardStats* stats) {
  const ModelConfig& cfg = model.config;
  if (seq.tokens.dim(1) != cfg.token_width())
    fail(ErrorCode::config_mismatch, "forward: sequence width " + std::to_string(seq.tokens.dim(1)) +
                                         " vs model token width " + std::to_string(cfg.token_width()));
  if (seq.n_query < 1) fail(ErrorCode::config_mismatch, "forward: sequence has no query rows");
  const int t = seq.rows();
  const int heads = cfg.n_heads;
  const int head_dim = cfg.hidden_dim / heads;
  const std::vector<uint8_t> mask = attention_mask(seq.n_support, seq.n_query, cfg.causal_mask);
  const S inv_sqrt_hd = S(1) / std::sqrt(static_cast<S>(head_dim));

  Tensor<S> x = add_row(matmul(seq.tokens, model.in_w), model.in_b);
  for (const EncoderBlock<S>& b : model.blocks) {
    Tensor<S> h = layer_norm(x, b.ln1_gain, b.ln1_bias, static_cast<S>(cfg.layer_norm_eps));
    Tensor<S> qm = add_row(matmul(h, b.wq), b.bq);
    Tensor<S> km = add_row(matmul(h, b.wk), b.bk);
    Tensor<S> vm = add_row(matmul(h, b.wv), b.bv);
    Tensor<S> attn_out;
    for (int hd = 0; hd < heads; ++hd) {
      Tensor<S> qh = slice_cols(qm, hd * head_dim, head_dim);
      Tensor<S> kh = slice_cols(km, hd * head_dim, head_dim);
      Tensor<S> vh = slice_cols(vm, hd * head_dim, head_dim);
      Tensor<S> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_hd);
      Tensor<S> probs = masked_softmax_rows(scores, mask);
      Tensor<S> oh = matmul(probs, vh);
      attn_out = (hd == 0) ? oh : concat_cols(attn_out, oh);
    }
    if (stats) stats->attn_score_elements += static_cast<uint64_t>(t) * static_cast<uint64_t>(t);
    x = add(x, add_row(matmul(attn_out, b.wo), b.bo));
    Tensor<S> m = layer_norm(x, b.ln2_gain, b.ln2_bias, static_cast<S>(cfg.layer_norm_eps));
    m = add_row(matmul(gelu(add_row(matmul(m, b.w1), b.b1)), b.w2), b.b2);
    x = add(x, m);
  }
  x = layer_norm(x, model.lnf_gain, model.lnf_bias, static_cast<S>(cfg.layer_norm_eps));
  Tensor<S> query_rows = slice_rows(x, seq.n_support, seq.n_query);
  if (stats) ++stats->forward_passes;
  return add_row(matmul(query_rows, model.score_w), model.score_b);
}

template <typename S>
Tensor<S> episode_scores(const TailModel<S>& model, const Episode& episode, ForwardStats* stats) {
  std::vector<std::vector<double>> sup, qry;
  sup.reserve(episode.support.size());
  qry.reserve(episode.query.size());
  for (const auto& s : episode.support) sup.push_back(episode.projection.apply(s.features));
  for (const auto& s : episode.query) qry.push_back(episode.projection.apply(s.features));
  std::vector<int> sup_idx;
  sup_idx.reserve(episode.support.size());
  for (const auto& s : episode.support) sup_idx.push_back(episode.rho.index_of(s.label));
  TokenSequence<S> seq = assemble_sequence(sup, sup_idx, qry, model.dict, model.config.d_data);
  return forward(model, seq, stats);
}

template <typename S>
std::vector<LabelId> predict(const TailModel<S>& model, const Episode& episode, ForwardStats* stats) {
  Tensor<S> scores = episode_scores(model, episode, stats);
  std::vector<LabelId> out;
  out.reserve(episode.query.size());
  const int m = scores.dim(1);
  for (int j = 0; j < scores.dim(0); ++j)
    out.push_back(classify(scores.data() + static_cast<size_t>(j) * m, m, episode.rho));
  return out;
}

template <typename S>
std::vector<LabelId> predict_per_query(const TailModel<S>& model, const Episode& episode, ForwardStats* stats) {
  std::vector<std::vector<double>> sup;
  sup.reserve(episode.support.size());
  for (const auto& s : episode.support) sup.push_back(episode.projection.apply(s.features));
  std::vector<int> sup_idx;
  sup_idx.reserve(episode.support.size());
  for (const auto& s : episode.support) sup_idx.push_back(episode.rho.index_of(s.label));

  std::vector<LabelId> out;
  out.reserve(episode.query.size());
  for (const auto& qs : episode.query) {
    std::vector<std::vector<double>> one_query = {episode.projection.apply(qs.features)};
    TokenSequence<S> seq = assemble_sequence(sup, sup_idx, one_query, model.dict, model.config.d_data);
    Tensor<S> scores = forward(model, seq, stats);
    out.push_back(classify(scores.data(), scores.dim(1), episode.rho));
  }
  return out;
}

}  // namespace tail
