#pragma once

#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "task.hpp"
#include "tensor.hpp"

namespace tail {

// Injective map from an episode's K labels to distinct dictionary indices,
// sampled uniformly over all injections into the active prefix [0, active).
struct LabelInjection {
  std::vector<LabelId> labels;       // the episode's K labels, in episode order
  std::vector<int> indices;          // indices[i] = dictionary index of labels[i]

  int k() const { return static_cast<int>(labels.size()); }

  int index_of(LabelId label) const {
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return indices[i];
    fail(ErrorCode::unmapped_label, "label id " + std::to_string(label) + " is not in this episode");
  }

  LabelId label_of(int index) const {
    for (size_t i = 0; i < indices.size(); ++i)
      if (indices[i] == index) return labels[i];
    fail(ErrorCode::unmapped_label, "dictionary index " + std::to_string(index) + " is not active");
  }

  // active_mask[j] != 0 iff j is in the image of the injection.
  std::vector<uint8_t> active_mask(int dictionary_size) const {
    std::vector<uint8_t> mask(dictionary_size, 0);
    for (int idx : indices) mask[static_cast<size_t>(idx)] = 1;
    return mask;
  }
};

LabelInjection sample_injection(const std::vector<LabelId>& labels, int active_count, Rng& rng);

// Growth schedule for the number of dictionary rows injections may use.
struct ScheduleConfig {
  int start_count = 0;    // M_0
  int warmup_episodes = 0;  // W
};

// The global learnable dictionary: M label-embedding rows plus the query
// class marker, with the schedule's active-count state.
template <typename S>
struct EmbeddingDictionary {
  Tensor<S> embeddings;    // M x d_label
  Tensor<S> query_marker;  // 1 x d_label
  int active_count = 0;

  int dictionary_size() const { return embeddings.dim(0); }
  int label_dim() const { return embeddings.dim(1); }

  static EmbeddingDictionary init(int dictionary_size, int d_label, Rng& rng) {
    if (dictionary_size < 1 || d_label < 1)
      fail(ErrorCode::invalid_config, "embedding dictionary needs positive M and d_label");
    EmbeddingDictionary dict;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d_label));
    dict.embeddings = randn<S>({dictionary_size, d_label}, rng, stddev, true);
    dict.query_marker = randn<S>({1, d_label}, rng, stddev, true);
    dict.active_count = dictionary_size;
    return dict;
  }
};

// active_count = min(M, M_0 + floor((M - M_0) * episode / W)); never shrinks.
template <typename S>
void advance_schedule(EmbeddingDictionary<S>& dict, uint64_t episode_index, const ScheduleConfig& schedule) {
  const int m = dict.dictionary_size();
  if (schedule.start_count < 1 || schedule.start_count > m || schedule.warmup_episodes <= 0)
    fail(ErrorCode::invalid_schedule, "schedule needs 1 <= M_0 <= M and W > 0");
  const uint64_t grown =
      static_cast<uint64_t>(schedule.start_count) +
      static_cast<uint64_t>(m - schedule.start_count) * episode_index / static_cast<uint64_t>(schedule.warmup_episodes);
  const int target = static_cast<int>(std::min<uint64_t>(grown, static_cast<uint64_t>(m)));
  if (target > dict.active_count) dict.active_count = target;
}

// Row i of the result is embeddings[rho(labels[i])]; gradients flow back to
// the selected dictionary rows only.
template <typename S>
Tensor<S> embed_labels(const EmbeddingDictionary<S>& dict, const LabelInjection& rho,
                       const std::vector<LabelId>& labels) {
  std::vector<int> rows;
  rows.reserve(labels.size());
  for (LabelId y : labels) rows.push_back(rho.index_of(y));
  return gather_rows(dict.embeddings, rows);
}

// Argmax over the episode-active indices only, ties toward the smallest
// index, mapped back through the inverse injection.
template <typename S>
LabelId classify(const S* scores, int score_count, const LabelInjection& rho) {
  if (rho.k() == 0) fail(ErrorCode::unmapped_label, "classify: empty injection");
  int best = -1;
  S best_score = S(0);
  for (int j = 0; j < score_count; ++j) {
    bool active = false;
    for (int idx : rho.indices)
      if (idx == j) {
        active = true;
        break;
      }
    if (!active) continue;
    if (best < 0 || scores[j] > best_score) {
      best = j;
      best_score = scores[j];
    }
  }
  return rho.label_of(best);
}

template <typename S>
LabelId classify(const Tensor<S>& scores, const LabelInjection& rho) {
  return classify(scores.data(), static_cast<int>(scores.size()), rho);
}

}  // namespace tail
