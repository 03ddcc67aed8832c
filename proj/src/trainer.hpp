#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "episode.hpp"
#include "model.hpp"

namespace tail {

template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m, v;  // aligned with named_parameters() order
  uint64_t step = 0;

  template <typename Params>
  static AdamState init(const Params& params) {
    AdamState st;
    for (const auto& [name, t] : params) {
      st.m.emplace_back(t.size(), S(0));
      st.v.emplace_back(t.size(), S(0));
    }
    return st;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam step over the parameter list; parameters with no
// accumulated gradient this episode are treated as having zero gradient.
template <typename S>
void adam_step(std::vector<std::pair<std::string, Tensor<S>>>& params, AdamState<S>& state,
               const AdamConfig& cfg, double lr) {
  if (params.size() != state.m.size()) fail(ErrorCode::config_mismatch, "adam: moment count vs parameter count");
  ++state.step;
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S corr1 = S(1) - static_cast<S>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const S corr2 = S(1) - static_cast<S>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const S alpha = static_cast<S>(lr);
  const S eps = static_cast<S>(cfg.eps);
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<S>& t = params[p].second;
    if (state.m[p].size() != t.size()) fail(ErrorCode::config_mismatch, "adam: moment shape vs parameter shape");
    const bool has_grad = t.has_grad();
    S* m = state.m[p].data();
    S* v = state.v[p].data();
    S* w = t.data();
    const S* g = has_grad ? t.grad_view().data() : nullptr;
    for (size_t i = 0; i < t.size(); ++i) {
      const S gi = has_grad ? g[i] : S(0);
      m[i] = b1 * m[i] + (S(1) - b1) * gi;
      v[i] = b2 * v[i] + (S(1) - b2) * gi * gi;
      w[i] -= alpha * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps);
    }
  }
}

// Symmetric triangular wave: 0 at phase 0, max_lr at half cycle, back to 0.
inline double cyclical_lr(uint64_t episode, double max_lr, uint64_t cycle_length) {
  if (cycle_length == 0) return max_lr;
  const double phase = static_cast<double>(episode % cycle_length) / static_cast<double>(cycle_length);
  return max_lr * (1.0 - std::abs(2.0 * phase - 1.0));
}

struct TrainerConfig {
  uint64_t episodes = 2000;
  double max_lr = 3e-4;  // desk-scale default; the paper-scale model uses 3e-5
  uint64_t cycle_length = 1000;
  AdamConfig adam;
  std::vector<int> shots = {1, 2, 3, 4, 5};
  std::vector<int> ways = {2, 3, 4, 5};
  int queries_per_class = 5;
  ProjectionKind projection = ProjectionKind::extended_permutation;
  bool loss_sum = false;  // paper-fidelity sum mode; mean by default
  std::optional<ScheduleConfig> schedule;
  uint64_t val_every = 0;  // 0 disables periodic validation
  int val_episodes = 32;
};

// The checkpointable unit: transformer + head + dictionary, optimizer
// moments, episode counter, schedule state (inside the dictionary), seed.
template <typename S>
struct ModelState {
  TailModel<S> model;
  AdamState<S> opt;
  TrainerConfig trainer;
  uint64_t episode = 0;  // completed training episodes
  uint64_t seed = 0;
};

struct TrainLogRow {
  uint64_t episode = 0;
  double loss = 0.0;
  double lr = 0.0;
  int active_count = 0;
  bool has_val = false;
  double val_loss = 0.0;
};

template <typename S>
struct TrainOutcome {
  bool diverged = false;
  uint64_t diverged_at = 0;
};

template <typename S>
ModelState<S> init_state(const ModelConfig& mcfg, const TrainerConfig& tcfg, uint64_t seed) {
  mcfg.validate();
  if (tcfg.shots.empty() || tcfg.ways.empty())
    fail(ErrorCode::invalid_config, "trainer: empty shot or way range");
  for (int s : tcfg.shots)
    if (s < 1) fail(ErrorCode::invalid_config, "trainer: shots must be positive");
  for (int w : tcfg.ways) {
    if (w < 2) fail(ErrorCode::invalid_config, "trainer: ways must be at least 2");
    if (w > mcfg.dictionary_size) fail(ErrorCode::invalid_config, "trainer: ways exceed dictionary size");
  }
  if (!(tcfg.max_lr > 0)) fail(ErrorCode::invalid_config, "trainer: max_lr must be positive");
  if (tcfg.cycle_length == 0) fail(ErrorCode::invalid_config, "trainer: cycle_length must be positive");
  ModelState<S> st;
  Rng rng(derive_seed(seed, "model-init", 0));
  st.model = TailModel<S>::init(mcfg, rng);
  if (tcfg.schedule) {
    if (tcfg.schedule->start_count < 1 || tcfg.schedule->start_count > mcfg.dictionary_size ||
        tcfg.schedule->warmup_episodes <= 0)
      fail(ErrorCode::invalid_schedule, "trainer: schedule needs 1 <= M_0 <= M and W > 0");
    st.model.dict.active_count = tcfg.schedule->start_count;
  }
  auto params = st.model.named_parameters();
  st.opt = AdamState<S>::init(params);
  st.trainer = tcfg;
  st.seed = seed;
  return st;
}

template <typename S>
double validation_loss(const ModelState<S>& state, const MetaDataset& val_meta) {
  const TrainerConfig& tcfg = state.trainer;
  SamplerConfig scfg;
  scfg.shot_range = tcfg.shots;
  scfg.way_range = tcfg.ways;
  scfg.queries_per_class = tcfg.queries_per_class;
  scfg.d_data = state.model.config.d_data;
  scfg.active_count = state.model.config.dictionary_size;
  scfg.projection = tcfg.projection;
  double total = 0.0;
  for (int i = 0; i < tcfg.val_episodes; ++i) {
    Rng rng(derive_seed(state.seed, "val-episode", static_cast<uint64_t>(i)));
    Episode ep = sample_episode(val_meta, scfg, rng);
    Tensor<S> scores = episode_scores(state.model, ep);
    Tensor<S> loss = episode_loss(scores, ep, tcfg.loss_sum);
    total += static_cast<double>(loss.at(0));
  }
  return total / tcfg.val_episodes;
}

// Runs the episode loop from state.episode to state.trainer.episodes:
// advance schedule, sample episode, forward with gradients, episode loss,
// backward, Adam step under the triangular cyclical learning rate. Stops
// early (state preserved) if the loss becomes non-finite.
template <typename S>
TrainOutcome<S> train_loop(ModelState<S>& state, const MetaDataset& meta, const MetaDataset* val_meta,
                           std::vector<TrainLogRow>* history) {
  meta.validate();
  validate_meta_for_width(meta, state.model.config.d_data);
  if (val_meta) validate_meta_for_width(*val_meta, state.model.config.d_data);
  const TrainerConfig& tcfg = state.trainer;
  auto params = state.model.named_parameters();

  TrainOutcome<S> outcome;
  for (uint64_t t = state.episode; t < tcfg.episodes; ++t) {
    if (tcfg.schedule) advance_schedule(state.model.dict, t, *tcfg.schedule);

    Rng rng(derive_seed(state.seed, "train-episode", t));
    SamplerConfig scfg;
    scfg.shot_range = tcfg.shots;
    scfg.way_range = tcfg.ways;
    scfg.queries_per_class = tcfg.queries_per_class;
    scfg.d_data = state.model.config.d_data;
    scfg.active_count = state.model.dict.active_count;
    scfg.projection = tcfg.projection;
    Episode ep = sample_episode(meta, scfg, rng);

    double loss_value = 0.0;
    {
      Tape tape;
      Tensor<S> scores = episode_scores(state.model, ep);
      Tensor<S> loss = episode_loss(scores, ep, tcfg.loss_sum);
      loss_value = static_cast<double>(loss.at(0));
      if (!std::isfinite(loss_value)) {
        outcome.diverged = true;
        outcome.diverged_at = t;
        break;
      }
      state.model.zero_grad();
      backward(loss);
    }
    const double lr = cyclical_lr(t, tcfg.max_lr, tcfg.cycle_length);
    adam_step(params, state.opt, tcfg.adam, lr);
    state.episode = t + 1;

    if (history) {
      TrainLogRow row;
      row.episode = t + 1;
      row.loss = loss_value;
      row.lr = lr;
      row.active_count = state.model.dict.active_count;
      if (tcfg.val_every > 0 && (t + 1) % tcfg.val_every == 0) {
        row.has_val = true;
        row.val_loss = validation_loss(state, val_meta ? *val_meta : meta);
      }
      history->push_back(row);
    }
  }
  return outcome;
}

template <typename S>
ModelState<S> train(const MetaDataset& meta, const MetaDataset* val_meta, const ModelConfig& mcfg,
                    const TrainerConfig& tcfg, uint64_t seed, std::vector<TrainLogRow>* history = nullptr,
                    TrainOutcome<S>* outcome_out = nullptr) {
  ModelState<S> state = init_state<S>(mcfg, tcfg, seed);
  TrainOutcome<S> outcome = train_loop(state, meta, val_meta, history);
  if (outcome_out) *outcome_out = outcome;
  return state;
}

}  // namespace tail
