#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace tail {

// Labels are kept as indices into a task's ordered label set; the identifier
// strings live in the task (or the backing feature file).
using LabelId = int;

// Class-conditional isotropic Gaussians with one mean per label and a shared
// variance. Gives a closed-form optimal classifier (nearest mean), which
// makes the Bayes risk measurable.
struct GaussianMixtureSource {
  std::vector<std::vector<double>> means;  // one per label, each of length feature_dim
  double variance = 1.0;                   // shared sigma^2, > 0
  uint64_t seed = 0;                       // recorded for provenance
};

// In-memory image of a feature-matrix file (binary "TAILFM01" or CSV).
struct FeatureStore {
  int feature_dim = 0;
  std::vector<std::string> label_names;  // the file's label table
  std::vector<int> row_labels;           // per row, index into label_names
  std::vector<double> features;          // row-major, row_count x feature_dim

  int row_count() const { return static_cast<int>(row_labels.size()); }
  const double* row(int r) const { return features.data() + static_cast<size_t>(r) * feature_dim; }

  static FeatureStore load_binary(const std::string& path);
  static FeatureStore load_csv(const std::string& path);
  void save_binary(const std::string& path) const;
};

struct FeatureStoreSource {
  std::shared_ptr<const FeatureStore> store;
  std::vector<std::vector<int>> rows_per_label;  // task label id -> store row indices
};

struct Task {
  int feature_dim = 0;
  std::vector<std::string> label_set;  // Y_T, ordered
  std::optional<GaussianMixtureSource> synthetic;
  std::optional<FeatureStoreSource> store;
  int loss_id = 0;  // 0-1 classification loss

  int n_labels() const { return static_cast<int>(label_set.size()); }
  bool is_synthetic() const { return synthetic.has_value(); }
  void validate() const;
};

// Builds a task over a subset of a store's labels (all labels if empty).
Task task_from_store(std::shared_ptr<const FeatureStore> store, std::vector<std::string> label_subset = {});

// Without-replacement tracking across draws within one episode (stores only).
struct EpisodeDraws {
  std::unordered_set<int> used_rows;
};

struct LabelledSample {
  std::vector<double> features;
  LabelId label;
};

// Synthetic: count i.i.d. Gaussian draws around the label's mean.
// Store: count distinct rows drawn uniformly without replacement within the
// episode (pass the same EpisodeDraws for each draw of the episode).
std::vector<LabelledSample> sample_labelled(const Task& task, LabelId label, int count, Rng& rng,
                                            EpisodeDraws* draws = nullptr);

struct BayesRiskEstimate {
  double value = 0.0;      // R* for 0-1 loss, equal class priors
  double std_error = 0.0;  // Monte-Carlo standard error
};

// Monte-Carlo risk of the optimal classifier argmin_y ||x - mu_y|| against
// the true mixture. Synthetic tasks only.
BayesRiskEstimate bayes_risk(const Task& task, int sample_count = 200000, uint64_t seed = 17);

struct MetaDataset {
  std::vector<Task> tasks;
  std::vector<double> weights;  // sampling weight, proportional to |Y_T|
  std::string split = "train";

  void validate() const;
  // Task index drawn with probability proportional to weight.
  int sample_task_index(Rng& rng) const;
};

// Rejects any task whose feature dimension exceeds the model's d_data.
void validate_meta_for_width(const MetaDataset& meta, int d_data);

struct TaskGridConfig {
  int task_count = 64;
  int d_min = 8, d_max = 32;            // range of d_T
  int classes_min = 5, classes_max = 8;  // range of |Y_T|
  double separation = 1.0;               // stddev of the mean positions
  double sigma = 1.0;                    // within-class stddev
  double min_pairwise_distance = 0.0;    // if > 0, means are rescaled to this
  uint64_t seed = 1;
  std::string split = "train";
};

// Deterministic-for-seed family of synthetic tasks with varied d_T and label
// sets; weights are the class counts.
MetaDataset make_task_grid(const TaskGridConfig& config);

}  // namespace tail
