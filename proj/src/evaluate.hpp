#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "baselines.hpp"
#include "model.hpp"
#include "stats.hpp"

namespace tail {

struct EvalReport {
  double accuracy = 0.0;  // mean of per-episode accuracies
  double ci95 = 0.0;      // 1.96 * sd / sqrt(episodes)
  uint64_t episodes = 0;
  int shots = 0;
  int ways = 0;
  double wall_ms = 0.0;
  uint64_t forward_passes = 0;
  uint64_t attn_score_elements = 0;
  std::vector<double> per_episode_accuracy;  // by episode index
  std::vector<int> per_episode_task;         // task index per episode
  std::map<int, double> per_task_accuracy;   // task index -> mean accuracy
};

struct EvalSettings {
  uint64_t episodes = 1000;
  int shots = 5;
  int ways = 5;
  int queries_per_class = 5;
  int threads = 1;
  ProjectionKind projection = ProjectionKind::extended_permutation;
};

namespace detail {

inline void finalize_report(EvalReport& report, std::vector<int> task_index) {
  const MeanStd ms = mean_std(report.per_episode_accuracy);
  report.accuracy = ms.mean;
  report.ci95 = 1.96 * ms.std_error;
  std::map<int, std::pair<double, int>> per_task;
  for (size_t i = 0; i < task_index.size(); ++i) {
    auto& [sum, count] = per_task[task_index[i]];
    sum += report.per_episode_accuracy[i];
    ++count;
  }
  for (const auto& [task, acc] : per_task) report.per_task_accuracy[task] = acc.first / acc.second;
  report.per_episode_task = std::move(task_index);
}

}  // namespace detail

// Episodes are distributed over worker threads; episode e always uses the rng
// stream (seed, "eval-episode", e) and fresh projection and injection, so the
// merged report is independent of the thread count.
template <typename S>
EvalReport evaluate(const TailModel<S>& model, const MetaDataset& meta, const EvalSettings& settings,
                    uint64_t seed) {
  meta.validate();
  validate_meta_for_width(meta, model.config.d_data);
  if (settings.ways > model.config.dictionary_size)
    fail(ErrorCode::too_many_labels, "evaluate: K exceeds dictionary size");

  const uint64_t episodes = settings.episodes;
  EvalReport report;
  report.episodes = episodes;
  report.shots = settings.shots;
  report.ways = settings.ways;
  report.per_episode_accuracy.assign(episodes, 0.0);
  std::vector<int> task_index(episodes, 0);
  std::vector<ForwardStats> worker_stats(std::max(settings.threads, 1));

  SamplerConfig scfg;
  scfg.shot_range = {settings.shots};
  scfg.way_range = {settings.ways};
  scfg.queries_per_class = settings.queries_per_class;
  scfg.d_data = model.config.d_data;
  scfg.active_count = model.config.dictionary_size;  // full dictionary at evaluation
  scfg.projection = settings.projection;

  const auto started = std::chrono::steady_clock::now();
  auto run_range = [&](uint64_t begin, uint64_t end, ForwardStats* stats) {
    for (uint64_t e = begin; e < end; ++e) {
      Rng rng(derive_seed(seed, "eval-episode", e));
      Episode ep = sample_episode(meta, scfg, rng);
      task_index[e] = ep.task_index;
      const std::vector<LabelId> predicted = predict(model, ep, stats);
      int correct = 0;
      for (size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == ep.query[i].label) ++correct;
      report.per_episode_accuracy[e] = static_cast<double>(correct) / ep.query_size();
    }
  };

  const int threads = std::max(settings.threads, 1);
  if (threads == 1 || episodes < 2) {
    run_range(0, episodes, &worker_stats[0]);
  } else {
    std::vector<std::thread> pool;
    const uint64_t chunk = (episodes + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
      const uint64_t begin = std::min<uint64_t>(w * chunk, episodes);
      const uint64_t end = std::min<uint64_t>(begin + chunk, episodes);
      if (begin < end) pool.emplace_back(run_range, begin, end, &worker_stats[w]);
    }
    for (auto& th : pool) th.join();
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  for (const ForwardStats& st : worker_stats) {
    report.forward_passes += st.forward_passes;
    report.attn_score_elements += st.attn_score_elements;
  }
  detail::finalize_report(report, std::move(task_index));
  return report;
}

// Same protocol for an arbitrary episode algorithm (baselines, oracles).
EvalReport evaluate_algorithm(const EpisodeAlgorithm& algorithm, const MetaDataset& meta,
                              const EvalSettings& settings, uint64_t seed);

struct LearningCurvePoint {
  int support_size = 0;  // n = N * K
  int shots = 0;
  double excess_risk = 0.0;  // mean 0-1 risk minus the task's Bayes risk
  double std_error = 0.0;
};

struct LearningCurve {
  std::vector<LearningCurvePoint> points;
  double bayes_risk_value = 0.0;
  double bayes_risk_se = 0.0;
  bool consistent_with_valid = false;  // non-increasing within 2 SE at each step
  std::string algorithm;
};

struct CurveSettings {
  int ways = 2;
  int queries_per_class = 5;
  int replications = 200;
  // Episode encoding; baselines ignore it. d_data 0 means the task's feature
  // dimension, active_count 0 means exactly `ways` indices.
  int d_data = 0;
  ProjectionKind projection = ProjectionKind::identity;
  int active_count = 0;
};

// Excess risk over the analytic (Monte-Carlo) Bayes risk for each support
// size n = N * K, N taken from `shots` in ascending order.
LearningCurve learning_curve(const EpisodeAlgorithm& algorithm, const Task& task, std::vector<int> shots,
                             const CurveSettings& settings, uint64_t seed);

template <typename S>
class TailAlgorithm : public EpisodeAlgorithm {
 public:
  explicit TailAlgorithm(const TailModel<S>& model) : model_(&model) {}
  std::vector<LabelId> predict(const Episode& episode) const override {
    return tail::predict(*model_, episode);
  }
  std::string name() const override { return "tail"; }

 private:
  const TailModel<S>* model_;
};

// One evaluation per K; the model is fixed, chance level falls as 1/K.
template <typename S>
std::vector<EvalReport> extrapolation_sweep(const TailModel<S>& model, const MetaDataset& meta,
                                            const std::vector<int>& way_values, EvalSettings settings,
                                            uint64_t seed) {
  std::vector<EvalReport> reports;
  for (int k : way_values) {
    settings.ways = k;
    reports.push_back(evaluate(model, meta, settings, derive_seed(seed, "extrapolate", static_cast<uint64_t>(k))));
  }
  return reports;
}

enum class QueryMode { inline_batch, per_query };

struct BenchRow {
  QueryMode mode = QueryMode::inline_batch;
  int ways = 0;
  int shots = 0;
  int support_size = 0;
  int query_size = 0;
  uint64_t episodes = 0;
  double accuracy = 0.0;
  double wall_ms_per_1000 = 0.0;
  uint64_t forward_passes_per_episode = 0;
  uint64_t attn_elements_per_episode = 0;
};

// Exact operation accounting per episode:
//   inline:    1 forward pass, n_layers * (n + q)^2 attention score elements
//   per-query: q forward passes, n_layers * q * (n + 1)^2 elements
template <typename S>
BenchRow efficiency_bench(const TailModel<S>& model, const MetaDataset& meta, int ways, int shots,
                          int queries_per_class, uint64_t episodes, QueryMode mode, uint64_t seed) {
  meta.validate();
  SamplerConfig scfg;
  scfg.shot_range = {shots};
  scfg.way_range = {ways};
  scfg.queries_per_class = queries_per_class;
  scfg.d_data = model.config.d_data;
  scfg.active_count = model.config.dictionary_size;

  BenchRow row;
  row.mode = mode;
  row.ways = ways;
  row.shots = shots;
  row.episodes = episodes;
  ForwardStats stats;
  uint64_t correct = 0, total = 0;
  const auto started = std::chrono::steady_clock::now();
  for (uint64_t e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "bench-episode", e));
    Episode ep = sample_episode(meta, scfg, rng);
    row.support_size = ep.support_size();
    row.query_size = ep.query_size();
    const std::vector<LabelId> predicted =
        mode == QueryMode::inline_batch ? predict(model, ep, &stats) : predict_per_query(model, ep, &stats);
    for (size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i] == ep.query[i].label) ++correct;
      ++total;
    }
  }
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  row.accuracy = total ? static_cast<double>(correct) / total : 0.0;
  row.wall_ms_per_1000 = episodes ? wall_ms * 1000.0 / episodes : 0.0;
  row.forward_passes_per_episode = episodes ? stats.forward_passes / episodes : 0;
  row.attn_elements_per_episode = episodes ? stats.attn_score_elements / episodes : 0;
  return row;
}

}  // namespace tail
