#include "task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "binio.hpp"

namespace tail {

namespace {
constexpr char kFeatureMagic[8] = {'T', 'A', 'I', 'L', 'F', 'M', '0', '1'};
}

void Task::validate() const {
  if (n_labels() < 2) fail(ErrorCode::invalid_config, "task needs at least 2 labels");
  if (feature_dim < 1) fail(ErrorCode::invalid_config, "task needs a positive feature dimension");
  if (synthetic.has_value() == store.has_value())
    fail(ErrorCode::invalid_config, "task needs exactly one source");
  if (synthetic) {
    if (static_cast<int>(synthetic->means.size()) != n_labels())
      fail(ErrorCode::invalid_config, "synthetic task: one mean per label required");
    for (const auto& mu : synthetic->means)
      if (static_cast<int>(mu.size()) != feature_dim)
        fail(ErrorCode::invalid_config, "synthetic task: mean length vs feature_dim");
    if (!(synthetic->variance > 0)) fail(ErrorCode::invalid_config, "synthetic task: variance must be positive");
  } else {
    if (static_cast<int>(store->rows_per_label.size()) != n_labels())
      fail(ErrorCode::invalid_config, "store task: row index per label required");
    for (const auto& rows : store->rows_per_label)
      if (rows.empty()) fail(ErrorCode::invalid_config, "store task: every label needs at least one sample");
  }
}

Task task_from_store(std::shared_ptr<const FeatureStore> store, std::vector<std::string> label_subset) {
  if (!store) fail(ErrorCode::invalid_config, "task_from_store: null store");
  Task task;
  task.feature_dim = store->feature_dim;
  if (label_subset.empty()) label_subset = store->label_names;
  task.label_set = std::move(label_subset);

  std::map<std::string, int> name_to_file_label;
  for (size_t i = 0; i < store->label_names.size(); ++i) name_to_file_label[store->label_names[i]] = static_cast<int>(i);

  FeatureStoreSource src;
  src.store = store;
  src.rows_per_label.resize(task.label_set.size());
  std::vector<int> file_label_of_task(task.label_set.size());
  for (size_t y = 0; y < task.label_set.size(); ++y) {
    auto it = name_to_file_label.find(task.label_set[y]);
    if (it == name_to_file_label.end())
      fail(ErrorCode::unknown_label, "label '" + task.label_set[y] + "' is not in the feature file");
    file_label_of_task[y] = it->second;
  }
  for (int r = 0; r < store->row_count(); ++r) {
    for (size_t y = 0; y < task.label_set.size(); ++y)
      if (store->row_labels[r] == file_label_of_task[y]) src.rows_per_label[y].push_back(r);
  }
  task.store = std::move(src);
  task.validate();
  return task;
}

std::vector<LabelledSample> sample_labelled(const Task& task, LabelId label, int count, Rng& rng,
                                            EpisodeDraws* draws) {
  if (label < 0 || label >= task.n_labels())
    fail(ErrorCode::unknown_label, "sample_labelled: label id " + std::to_string(label));
  if (count < 0) fail(ErrorCode::invalid_config, "sample_labelled: negative count");

  std::vector<LabelledSample> out;
  out.reserve(count);
  if (task.is_synthetic()) {
    const auto& mu = task.synthetic->means[static_cast<size_t>(label)];
    const double stddev = std::sqrt(task.synthetic->variance);
    for (int i = 0; i < count; ++i) {
      LabelledSample s;
      s.label = label;
      s.features.resize(task.feature_dim);
      for (int j = 0; j < task.feature_dim; ++j) s.features[j] = mu[j] + stddev * rng.normal();
      out.push_back(std::move(s));
    }
    return out;
  }

  const auto& rows = task.store->rows_per_label[static_cast<size_t>(label)];
  std::vector<int> available;
  available.reserve(rows.size());
  for (int r : rows)
    if (!draws || !draws->used_rows.count(r)) available.push_back(r);
  if (static_cast<int>(available.size()) < count)
    fail(ErrorCode::insufficient_samples, "label '" + task.label_set[static_cast<size_t>(label)] + "' has " +
                                              std::to_string(available.size()) + " rows left, need " +
                                              std::to_string(count));
  const std::vector<int> picks = rng.sample_distinct(count, static_cast<int>(available.size()));
  const FeatureStore& store = *task.store->store;
  for (int p : picks) {
    const int r = available[static_cast<size_t>(p)];
    if (draws) draws->used_rows.insert(r);
    LabelledSample s;
    s.label = label;
    s.features.assign(store.row(r), store.row(r) + store.feature_dim);
    out.push_back(std::move(s));
  }
  return out;
}

BayesRiskEstimate bayes_risk(const Task& task, int sample_count, uint64_t seed) {
  if (!task.is_synthetic()) fail(ErrorCode::not_synthetic, "bayes_risk needs a synthetic task");
  task.validate();
  const auto& means = task.synthetic->means;
  const double stddev = std::sqrt(task.synthetic->variance);
  const int k = task.n_labels();
  Rng rng(derive_seed(seed, "bayes-risk", 0));
  int64_t errors = 0;
  std::vector<double> x(task.feature_dim);
  for (int s = 0; s < sample_count; ++s) {
    const int y = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(k)));
    for (int j = 0; j < task.feature_dim; ++j) x[j] = means[y][j] + stddev * rng.normal();
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double dist = 0.0;
      for (int j = 0; j < task.feature_dim; ++j) {
        const double diff = x[j] - means[c][j];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    if (best != y) ++errors;
  }
  BayesRiskEstimate est;
  est.value = static_cast<double>(errors) / sample_count;
  est.std_error = std::sqrt(std::max(est.value * (1.0 - est.value), 1e-12) / sample_count);
  return est;
}

void MetaDataset::validate() const {
  if (tasks.empty()) fail(ErrorCode::empty_meta_dataset, "meta-dataset has no tasks");
  if (weights.size() != tasks.size()) fail(ErrorCode::invalid_config, "meta-dataset: one weight per task");
  for (double w : weights)
    if (!(w > 0)) fail(ErrorCode::invalid_config, "meta-dataset: weights must be positive");
  for (const Task& t : tasks) t.validate();
}

int MetaDataset::sample_task_index(Rng& rng) const {
  if (tasks.empty()) fail(ErrorCode::empty_meta_dataset, "meta-dataset has no tasks");
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = rng.uniform01() * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

void validate_meta_for_width(const MetaDataset& meta, int d_data) {
  for (const Task& t : meta.tasks)
    if (t.feature_dim > d_data)
      fail(ErrorCode::dim_too_large, "task with d_T=" + std::to_string(t.feature_dim) +
                                         " exceeds d_data=" + std::to_string(d_data));
}

MetaDataset make_task_grid(const TaskGridConfig& config) {
  if (config.task_count < 1) fail(ErrorCode::invalid_config, "task grid: task_count must be positive");
  if (config.d_min < 1 || config.d_max < config.d_min) fail(ErrorCode::invalid_config, "task grid: bad d_T range");
  if (config.classes_min < 2 || config.classes_max < config.classes_min)
    fail(ErrorCode::invalid_config, "task grid: class count range needs classes_min >= 2");
  if (!(config.sigma > 0)) fail(ErrorCode::invalid_config, "task grid: sigma must be positive");
  if (!(config.separation > 0)) fail(ErrorCode::invalid_config, "task grid: separation must be positive");

  MetaDataset meta;
  meta.split = config.split;
  for (int i = 0; i < config.task_count; ++i) {
    Rng rng(derive_seed(config.seed, "task-grid", static_cast<uint64_t>(i)));
    Task task;
    task.feature_dim = rng.uniform_int(config.d_min, config.d_max);
    const int k = rng.uniform_int(config.classes_min, config.classes_max);
    for (int c = 0; c < k; ++c) task.label_set.push_back("c" + std::to_string(c));

    GaussianMixtureSource src;
    src.variance = config.sigma * config.sigma;
    src.seed = derive_seed(config.seed, "task-grid-data", static_cast<uint64_t>(i));
    src.means.resize(k);
    for (int c = 0; c < k; ++c) {
      src.means[c].resize(task.feature_dim);
      for (int j = 0; j < task.feature_dim; ++j) src.means[c][j] = config.separation * rng.normal();
    }
    if (config.min_pairwise_distance > 0) {
      double min_dist = std::numeric_limits<double>::infinity();
      for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
          double d2 = 0.0;
          for (int j = 0; j < task.feature_dim; ++j) {
            const double diff = src.means[a][j] - src.means[b][j];
            d2 += diff * diff;
          }
          min_dist = std::min(min_dist, std::sqrt(d2));
        }
      const double scale = config.min_pairwise_distance / min_dist;
      for (auto& mu : src.means)
        for (double& v : mu) v *= scale;
    }
    task.synthetic = std::move(src);
    task.validate();
    meta.weights.push_back(static_cast<double>(k));
    meta.tasks.push_back(std::move(task));
  }
  return meta;
}

FeatureStore FeatureStore::load_binary(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kFeatureMagic, 8) != 0)
    fail(ErrorCode::format_version_mismatch, path + " is not a TAILFM01 feature file");
  ByteReader r(bytes.data() + 8, bytes.size() - 8);
  FeatureStore store;
  const uint32_t rows = r.u32();
  store.feature_dim = static_cast<int>(r.u32());
  const uint32_t label_count = r.u32();
  for (uint32_t i = 0; i < label_count; ++i) store.label_names.push_back(r.str());
  store.row_labels.resize(rows);
  store.features.resize(static_cast<size_t>(rows) * store.feature_dim);
  for (uint32_t i = 0; i < rows; ++i) {
    const uint32_t label = r.u32();
    if (label >= label_count) fail(ErrorCode::format_version_mismatch, "row label index out of range");
    store.row_labels[i] = static_cast<int>(label);
    for (int j = 0; j < store.feature_dim; ++j)
      store.features[static_cast<size_t>(i) * store.feature_dim + j] = r.f32();
  }
  return store;
}

void FeatureStore::save_binary(const std::string& path) const {
  ByteWriter w;
  w.raw(kFeatureMagic, 8);
  w.u32(static_cast<uint32_t>(row_count()));
  w.u32(static_cast<uint32_t>(feature_dim));
  w.u32(static_cast<uint32_t>(label_names.size()));
  for (const auto& name : label_names) w.str(name);
  for (int i = 0; i < row_count(); ++i) {
    w.u32(static_cast<uint32_t>(row_labels[i]));
    for (int j = 0; j < feature_dim; ++j) w.f32(static_cast<float>(row(i)[j]));
  }
  write_file_bytes(path, w.bytes());
}

FeatureStore FeatureStore::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_failure, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::format_version_mismatch, path + ": empty CSV");
  if (line.rfind("label,", 0) != 0)
    fail(ErrorCode::format_version_mismatch, path + ": CSV header must start with 'label,'");
  FeatureStore store;
  store.feature_dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::map<std::string, int> label_index;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    if (!std::getline(ss, field, ',')) fail(ErrorCode::format_version_mismatch, path + ": bad row");
    auto [it, inserted] = label_index.try_emplace(field, static_cast<int>(store.label_names.size()));
    if (inserted) store.label_names.push_back(field);
    store.row_labels.push_back(it->second);
    int count = 0;
    while (std::getline(ss, field, ',')) {
      try {
        store.features.push_back(std::stod(field));
      } catch (const std::exception&) {
        fail(ErrorCode::format_version_mismatch, path + ": non-numeric feature at line " + std::to_string(line_no));
      }
      ++count;
    }
    if (count != store.feature_dim)
      fail(ErrorCode::format_version_mismatch, path + ": row at line " + std::to_string(line_no) + " has " +
                                                   std::to_string(count) + " features, expected " +
                                                   std::to_string(store.feature_dim));
  }
  if (store.row_labels.empty()) fail(ErrorCode::format_version_mismatch, path + ": CSV has no data rows");
  return store;
}

}  // namespace tail
