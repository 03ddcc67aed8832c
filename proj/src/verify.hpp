#pragma once

#include <functional>
#include <string>
#include <vector>

#include "config.hpp"
#include "evaluate.hpp"
#include "trainer.hpp"

namespace tail {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifySettings {
  int episodes = 200;         // episodes per model property
  int permutations = 5;       // permutations per episode
  int uniformity_draws = 100000;
  int coverage_episodes = 4000;
  bool gradcheck = true;
  double logit_tolerance = 0.0;  // 0 = pick by precision (1e-10 f64, 1e-4 f32)
  uint64_t seed = 7;
};

// The property suite behind `tail verify`: architectural invariants that hold
// for any parameter values, plus sampling statistics and gradient checks.
//   - demonstration order invariance (identical argmax, logits within tol)
//   - label re-indexing equivariance, paired form (exact)
//   - feature coordinate equivariance, paired form (exact)
//   - injection and extended-permutation uniformity (chi-square)
//   - embedding and coordinate coverage statistics (binomial)
//   - inline vs per-query equivalence (bitwise) and operation accounting
//   - gradient checks against central finite differences (double precision)
template <typename S>
std::vector<PropertyResult> run_property_suite(const TailModel<S>& model, const VerifySettings& settings);

// Convenience: fresh random model from the config.
std::vector<PropertyResult> run_property_suite_fresh(const ModelConfig& mcfg, Precision precision,
                                                     const VerifySettings& settings);

bool all_passed(const std::vector<PropertyResult>& results);

// ---- pieces reused by the acceptance suite ----

// Builds a small mixed meta-dataset for property checks (tasks with varying
// d_T <= d_data, class counts >= max way).
MetaDataset property_task_grid(int d_data, uint64_t seed);

template <typename S>
PropertyResult check_order_invariance(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                      int permutations, double logit_tol, uint64_t seed);

template <typename S>
PropertyResult check_label_reindexing(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                      int permutations, uint64_t seed);

template <typename S>
PropertyResult check_feature_equivariance(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                          int permutations, uint64_t seed);

template <typename S>
PropertyResult check_inline_equivalence(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                        int queries_per_class, uint64_t seed);

PropertyResult check_injection_uniformity(int draws, uint64_t seed);
PropertyResult check_permutation_uniformity(int draws, uint64_t seed);
PropertyResult check_embedding_coverage(int episodes, int ways, int active_count, uint64_t seed);
PropertyResult check_coordinate_coverage(int episodes, int d_t, int d_data, uint64_t seed);

// Whole-model double-precision gradient check on a small 2-way 1-shot
// instance; every parameter compared against central finite differences.
PropertyResult check_model_gradients(double tolerance, uint64_t seed, double* max_rel_err_out = nullptr,
                                     const ModelConfig* config_override = nullptr);

// Appendix-style gradient unbiasedness: mean dictionary-row gradient over
// fresh injections equals (K / M) * conditional mean within 3 SE.
PropertyResult check_gradient_unbiasedness(int draws, uint64_t seed);

}  // namespace tail
