#include "episode.hpp"

namespace tail {

Episode sample_episode(const MetaDataset& meta, const SamplerConfig& config, Rng& rng) {
  if (meta.tasks.empty()) fail(ErrorCode::empty_meta_dataset, "sample_episode: empty meta-dataset");
  if (config.shot_range.empty() || config.way_range.empty())
    fail(ErrorCode::invalid_config, "sample_episode: empty shot or way range");
  if (config.queries_per_class < 1) fail(ErrorCode::invalid_config, "sample_episode: queries_per_class must be positive");

  Episode ep;
  ep.task_index = meta.sample_task_index(rng);
  ep.task = &meta.tasks[static_cast<size_t>(ep.task_index)];

  const int k = config.way_range[rng.uniform_below(config.way_range.size())];
  const int n = config.shot_range[rng.uniform_below(config.shot_range.size())];
  ep.shots = n;
  ep.queries_per_class = config.queries_per_class;

  if (k > ep.task->n_labels())
    fail(ErrorCode::task_too_small, "episode wants K=" + std::to_string(k) + " but task has " +
                                        std::to_string(ep.task->n_labels()) + " labels");
  if (!ep.task->is_synthetic()) {
    for (size_t y = 0; y < ep.task->store->rows_per_label.size(); ++y) {
      const int have = static_cast<int>(ep.task->store->rows_per_label[y].size());
      if (have < n + config.queries_per_class)
        fail(ErrorCode::task_too_small, "label '" + ep.task->label_set[y] + "' has " + std::to_string(have) +
                                            " rows, episode needs " + std::to_string(n + config.queries_per_class));
    }
  }
  if (ep.task->feature_dim > config.d_data)
    fail(ErrorCode::dim_too_large, "task d_T=" + std::to_string(ep.task->feature_dim) +
                                       " exceeds d_data=" + std::to_string(config.d_data));

  const std::vector<int> chosen = rng.sample_distinct(k, ep.task->n_labels());
  ep.way_labels.assign(chosen.begin(), chosen.end());

  EpisodeDraws draws;
  for (LabelId y : ep.way_labels) {
    auto samples = sample_labelled(*ep.task, y, n, rng, &draws);
    ep.support.insert(ep.support.end(), samples.begin(), samples.end());
  }
  for (LabelId y : ep.way_labels) {
    auto samples = sample_labelled(*ep.task, y, config.queries_per_class, rng, &draws);
    ep.query.insert(ep.query.end(), samples.begin(), samples.end());
  }

  ep.projection = sample_projection(config.projection, ep.task->feature_dim, config.d_data, rng);
  ep.rho = sample_injection(ep.way_labels, config.active_count, rng);
  return ep;
}

}  // namespace tail
