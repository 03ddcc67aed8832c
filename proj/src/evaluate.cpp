#include "evaluate.hpp"

#include <algorithm>
#include <cmath>

namespace tail {

EvalReport evaluate_algorithm(const EpisodeAlgorithm& algorithm, const MetaDataset& meta,
                              const EvalSettings& settings, uint64_t seed) {
  meta.validate();
  EvalReport report;
  report.episodes = settings.episodes;
  report.shots = settings.shots;
  report.ways = settings.ways;
  report.per_episode_accuracy.assign(settings.episodes, 0.0);
  std::vector<int> task_index(settings.episodes, 0);

  int max_dim = 1;
  for (const Task& t : meta.tasks) max_dim = std::max(max_dim, t.feature_dim);
  SamplerConfig scfg;
  scfg.shot_range = {settings.shots};
  scfg.way_range = {settings.ways};
  scfg.queries_per_class = settings.queries_per_class;
  scfg.d_data = max_dim;  // baselines consume the raw features
  scfg.projection = ProjectionKind::identity;
  scfg.active_count = settings.ways;

  const auto started = std::chrono::steady_clock::now();
  for (uint64_t e = 0; e < settings.episodes; ++e) {
    Rng rng(derive_seed(seed, "eval-episode", e));
    Episode ep = sample_episode(meta, scfg, rng);
    task_index[e] = ep.task_index;
    const std::vector<LabelId> predicted = algorithm.predict(ep);
    int correct = 0;
    for (size_t i = 0; i < predicted.size(); ++i)
      if (predicted[i] == ep.query[i].label) ++correct;
    report.per_episode_accuracy[e] = static_cast<double>(correct) / ep.query_size();
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  detail::finalize_report(report, std::move(task_index));
  return report;
}

LearningCurve learning_curve(const EpisodeAlgorithm& algorithm, const Task& task, std::vector<int> shots,
                             const CurveSettings& settings, uint64_t seed) {
  if (!task.is_synthetic()) fail(ErrorCode::not_synthetic, "learning_curve needs a synthetic task (known Bayes risk)");
  if (settings.replications < 2) fail(ErrorCode::invalid_config, "learning_curve: need at least 2 replications");
  const int ways = settings.ways;
  const int replications = settings.replications;
  std::sort(shots.begin(), shots.end());

  const BayesRiskEstimate bayes = bayes_risk(task);
  MetaDataset meta;
  meta.tasks.push_back(task);
  meta.weights.push_back(static_cast<double>(task.n_labels()));

  LearningCurve curve;
  curve.algorithm = algorithm.name();
  curve.bayes_risk_value = bayes.value;
  curve.bayes_risk_se = bayes.std_error;

  for (int n_shot : shots) {
    SamplerConfig scfg;
    scfg.shot_range = {n_shot};
    scfg.way_range = {ways};
    scfg.queries_per_class = settings.queries_per_class;
    scfg.d_data = settings.d_data > 0 ? settings.d_data : task.feature_dim;
    scfg.projection = settings.projection;
    scfg.active_count = settings.active_count > 0 ? settings.active_count : ways;

    std::vector<double> risks(replications);
    for (int r = 0; r < replications; ++r) {
      Rng rng(derive_seed(seed, "curve-episode", static_cast<uint64_t>(n_shot) << 32 | static_cast<uint64_t>(r)));
      Episode ep = sample_episode(meta, scfg, rng);
      const std::vector<LabelId> predicted = algorithm.predict(ep);
      int wrong = 0;
      for (size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] != ep.query[i].label) ++wrong;
      risks[r] = static_cast<double>(wrong) / ep.query_size();
    }
    const MeanStd ms = mean_std(risks);
    LearningCurvePoint point;
    point.shots = n_shot;
    point.support_size = n_shot * ways;
    point.excess_risk = ms.mean - bayes.value;
    point.std_error = ms.std_error;
    curve.points.push_back(point);
  }

  curve.consistent_with_valid = true;
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const auto& prev = curve.points[i - 1];
    const auto& cur = curve.points[i];
    const double slack = 2.0 * std::sqrt(prev.std_error * prev.std_error + cur.std_error * cur.std_error);
    if (cur.excess_risk > prev.excess_risk + slack) curve.consistent_with_valid = false;
  }
  return curve;
}

}  // namespace tail
