#pragma once

#include <cstdint>
#include <vector>

#include "encoding.hpp"
#include "labels.hpp"
#include "task.hpp"
#include "tensor.hpp"

namespace tail {

// One N-shot instance of a task: class-balanced support and query sets plus
// the episode's fresh feature projection and label injection.
struct Episode {
  const Task* task = nullptr;
  int task_index = -1;
  int shots = 0;              // N
  int queries_per_class = 0;  // N_Q
  std::vector<LabelId> way_labels;      // the K drawn labels, in episode order
  std::vector<LabelledSample> support;  // N per label, |S| = N * K
  std::vector<LabelledSample> query;    // N_Q per label, |Q| = N_Q * K
  Projection projection;
  LabelInjection rho;
  uint64_t episode_seed = 0;

  int way() const { return static_cast<int>(way_labels.size()); }
  int support_size() const { return static_cast<int>(support.size()); }
  int query_size() const { return static_cast<int>(query.size()); }
};

struct SamplerConfig {
  std::vector<int> shot_range = {1, 2, 3, 4, 5};  // candidate N values
  std::vector<int> way_range = {2, 3, 4, 5};      // candidate K values
  int queries_per_class = 5;
  int d_data = 64;
  int active_count = 64;  // injection space for rho
  ProjectionKind projection = ProjectionKind::extended_permutation;
};

// Draws task with probability proportional to its class count, K and N
// uniformly from their ranges, class-balanced disjoint S and Q, then a fresh
// projection and label injection. Fully determined by the rng state.
Episode sample_episode(const MetaDataset& meta, const SamplerConfig& config, Rng& rng);

// Mean (default) or sum over the query set of the masked cross entropy of
// each query's score row against its injected label index.
template <typename S>
Tensor<S> episode_loss(const Tensor<S>& scores, const Episode& episode, bool sum_mode = false) {
  if (!scores.defined() || scores.ndim() != 2 || scores.dim(0) != episode.query_size())
    fail(ErrorCode::length_mismatch, "episode_loss: expected one score row per query sample");
  const int q = episode.query_size();
  const std::vector<uint8_t> mask = episode.rho.active_mask(scores.dim(1));
  Tensor<S> total;
  for (int j = 0; j < q; ++j) {
    Tensor<S> row = slice_rows(scores, j, 1);
    Tensor<S> ce = masked_cross_entropy(row, episode.rho.index_of(episode.query[static_cast<size_t>(j)].label), mask);
    total = (j == 0) ? ce : add(total, ce);
  }
  return sum_mode ? total : scale(total, S(1) / static_cast<S>(q));
}

}  // namespace tail
