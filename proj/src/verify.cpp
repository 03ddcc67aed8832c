#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "stats.hpp"

namespace tail {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

SamplerConfig property_sampler(const ModelConfig& cfg) {
  SamplerConfig scfg;
  scfg.shot_range = {1, 2, 3, 4, 5};
  scfg.way_range = {2, 3, 4, std::min(5, cfg.dictionary_size)};
  scfg.queries_per_class = 2;
  scfg.d_data = cfg.d_data;
  scfg.active_count = cfg.dictionary_size;
  scfg.projection = ProjectionKind::extended_permutation;
  return scfg;
}

ModelConfig gradcheck_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.mlp_dim = 32;
  cfg.d_data = 8;
  cfg.d_label = 4;
  cfg.dictionary_size = 6;
  return cfg;
}

MetaDataset gradcheck_tasks(uint64_t seed) {
  TaskGridConfig grid;
  grid.task_count = 4;
  grid.d_min = 4;
  grid.d_max = 8;
  grid.classes_min = 2;
  grid.classes_max = 3;
  grid.separation = 1.0;
  grid.sigma = 1.0;
  grid.seed = seed;
  return make_task_grid(grid);
}

}  // namespace

MetaDataset property_task_grid(int d_data, uint64_t seed) {
  TaskGridConfig grid;
  grid.task_count = 12;
  grid.d_min = std::max(2, d_data / 8);
  grid.d_max = d_data;
  grid.classes_min = 5;
  grid.classes_max = 8;
  grid.separation = 1.0;
  grid.sigma = 1.0;
  grid.seed = derive_seed(seed, "property-tasks", 0);
  return make_task_grid(grid);
}

template <typename S>
PropertyResult check_order_invariance(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                      int permutations, double logit_tol, uint64_t seed) {
  PropertyResult result;
  result.name = "order-invariance";
  SamplerConfig scfg = property_sampler(model.config);
  int mismatches = 0;
  double max_diff = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "order-episode", static_cast<uint64_t>(e)));
    Episode ep = sample_episode(meta, scfg, rng);
    const Tensor<S> base_scores = episode_scores(model, ep);
    const std::vector<LabelId> base_pred = predict(model, ep);
    for (int p = 0; p < permutations; ++p) {
      Episode shuffled = ep;
      const std::vector<int> order = rng.sample_distinct(ep.support_size(), ep.support_size());
      for (int i = 0; i < ep.support_size(); ++i)
        shuffled.support[static_cast<size_t>(i)] = ep.support[static_cast<size_t>(order[i])];
      const Tensor<S> scores = episode_scores(model, shuffled);
      const std::vector<LabelId> pred = predict(model, shuffled);
      if (pred != base_pred) ++mismatches;
      for (size_t i = 0; i < scores.size(); ++i)
        max_diff = std::max(max_diff, std::abs(static_cast<double>(scores.data()[i]) -
                                               static_cast<double>(base_scores.data()[i])));
    }
  }
  result.pass = mismatches == 0 && max_diff <= logit_tol;
  result.detail = std::to_string(episodes) + "x" + std::to_string(permutations) +
                  " support permutations: prediction mismatches " + std::to_string(mismatches) +
                  ", max logit diff " + fmt(max_diff) + " (tol " + fmt(logit_tol) + ")";
  return result;
}

template <typename S>
PropertyResult check_label_reindexing(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                      int permutations, uint64_t seed) {
  PropertyResult result;
  result.name = "label-reindexing-equivariance";
  SamplerConfig scfg = property_sampler(model.config);
  int mismatches = 0;
  int64_t cases = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "relabel-episode", static_cast<uint64_t>(e)));
    Episode ep = sample_episode(meta, scfg, rng);
    const std::vector<LabelId> base_pred = predict(model, ep);
    const int k = ep.way();
    for (int p = 0; p < permutations; ++p) {
      // sigma permutes the episode's label set: way_labels[i] -> way_labels[perm[i]]
      const std::vector<int> perm = rng.sample_distinct(k, k);
      std::map<LabelId, LabelId> sigma;
      for (int i = 0; i < k; ++i) sigma[ep.way_labels[static_cast<size_t>(i)]] = ep.way_labels[static_cast<size_t>(perm[i])];

      Episode relabeled = ep;
      for (auto& s : relabeled.support) s.label = sigma.at(s.label);
      for (auto& s : relabeled.query) s.label = sigma.at(s.label);
      // rho' = rho o sigma^-1: the new label sigma(y) keeps y's dictionary index.
      for (int i = 0; i < k; ++i) relabeled.rho.labels[static_cast<size_t>(i)] = sigma.at(ep.rho.labels[static_cast<size_t>(i)]);

      const std::vector<LabelId> pred = predict(model, relabeled);
      for (size_t i = 0; i < pred.size(); ++i) {
        ++cases;
        if (pred[i] != sigma.at(base_pred[i])) ++mismatches;
      }
    }
  }
  result.pass = mismatches == 0;
  result.detail = std::to_string(cases) + " paired predictions under label permutation: " +
                  std::to_string(mismatches) + " mismatches";
  return result;
}

template <typename S>
PropertyResult check_feature_equivariance(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                          int permutations, uint64_t seed) {
  PropertyResult result;
  result.name = "feature-coordinate-equivariance";
  SamplerConfig scfg = property_sampler(model.config);
  int mismatches = 0;
  int64_t cases = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "feature-perm-episode", static_cast<uint64_t>(e)));
    Episode ep = sample_episode(meta, scfg, rng);
    const std::vector<LabelId> base_pred = predict(model, ep);
    const int d = ep.task->feature_dim;
    for (int p = 0; p < permutations; ++p) {
      const std::vector<int> sigma = rng.sample_distinct(d, d);  // coordinate i -> sigma[i]
      Episode permuted = ep;
      auto permute_features = [&](std::vector<LabelledSample>& samples, const std::vector<LabelledSample>& src) {
        for (size_t s = 0; s < samples.size(); ++s)
          for (int i = 0; i < d; ++i)
            samples[s].features[static_cast<size_t>(sigma[i])] = src[s].features[static_cast<size_t>(i)];
      };
      permute_features(permuted.support, ep.support);
      permute_features(permuted.query, ep.query);
      permuted.projection.perm = compose_with_inverse(ep.projection.perm, sigma);
      const std::vector<LabelId> pred = predict(model, permuted);
      ++cases;
      if (pred != base_pred) ++mismatches;
    }
  }
  result.pass = mismatches == 0;
  result.detail = std::to_string(cases) + " paired episodes under coordinate permutation: " +
                  std::to_string(mismatches) + " mismatches";
  return result;
}

template <typename S>
PropertyResult check_inline_equivalence(const TailModel<S>& model, const MetaDataset& meta, int episodes,
                                        int queries_per_class, uint64_t seed) {
  PropertyResult result;
  result.name = "inline-query-equivalence";
  SamplerConfig scfg = property_sampler(model.config);
  scfg.way_range = {std::min(4, model.config.dictionary_size)};
  scfg.queries_per_class = queries_per_class;

  int score_mismatches = 0;
  int accounting_errors = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "inline-episode", static_cast<uint64_t>(e)));
    Episode ep = sample_episode(meta, scfg, rng);
    const int n = ep.support_size(), q = ep.query_size();
    const uint64_t layers = static_cast<uint64_t>(model.config.n_layers);

    ForwardStats inline_stats;
    const Tensor<S> inline_scores = episode_scores(model, ep, &inline_stats);
    if (inline_stats.forward_passes != 1 ||
        inline_stats.attn_score_elements != layers * static_cast<uint64_t>(n + q) * static_cast<uint64_t>(n + q))
      ++accounting_errors;

    std::vector<std::vector<double>> sup;
    std::vector<int> sup_idx;
    for (const auto& s : ep.support) {
      sup.push_back(ep.projection.apply(s.features));
      sup_idx.push_back(ep.rho.index_of(s.label));
    }
    ForwardStats per_query_stats;
    bool equal = true;
    for (int j = 0; j < q; ++j) {
      std::vector<std::vector<double>> one = {ep.projection.apply(ep.query[static_cast<size_t>(j)].features)};
      TokenSequence<S> seq = assemble_sequence(sup, sup_idx, one, model.dict, model.config.d_data);
      const Tensor<S> row = forward(model, seq, &per_query_stats);
      for (int c = 0; c < row.dim(1); ++c)
        if (row.at(0, c) != inline_scores.at(j, c)) equal = false;  // bitwise
    }
    if (!equal) ++score_mismatches;
    if (per_query_stats.forward_passes != static_cast<uint64_t>(q) ||
        per_query_stats.attn_score_elements !=
            layers * static_cast<uint64_t>(q) * static_cast<uint64_t>(n + 1) * static_cast<uint64_t>(n + 1))
      ++accounting_errors;
  }
  result.pass = score_mismatches == 0 && accounting_errors == 0;
  result.detail = std::to_string(episodes) + " episodes: " + std::to_string(score_mismatches) +
                  " inline/per-query score mismatches, " + std::to_string(accounting_errors) +
                  " operation-accounting errors";
  return result;
}

PropertyResult check_injection_uniformity(int draws, uint64_t seed) {
  PropertyResult result;
  result.name = "injection-uniformity";
  // K=2 into M=4: 12 equally likely injections.
  const int k = 2, m = 4;
  Rng rng(derive_seed(seed, "injection-uniformity", 0));
  std::map<std::pair<int, int>, int64_t> counts;
  const std::vector<LabelId> labels = {0, 1};
  for (int t = 0; t < draws; ++t) {
    const LabelInjection rho = sample_injection(labels, m, rng);
    ++counts[{rho.indices[0], rho.indices[1]}];
  }
  std::vector<int64_t> observed;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      if (a != b) observed.push_back(counts[{a, b}]);
  const std::vector<double> expected(observed.size(), static_cast<double>(draws) / observed.size());
  const double stat = chi_square_statistic(observed, expected);
  const double p = chi_square_pvalue(stat, static_cast<int>(observed.size()) - 1);
  result.pass = p > 0.001;
  result.detail = "chi-square over " + std::to_string(observed.size()) + " injections (K=2, M=4), " +
                  std::to_string(draws) + " draws: stat " + fmt(stat) + ", p " + fmt(p);
  return result;
}

PropertyResult check_permutation_uniformity(int draws, uint64_t seed) {
  PropertyResult result;
  result.name = "extended-permutation-uniformity";
  // d_T=2 into d_data=4: 12 equally likely injections.
  const int d_t = 2, d_data = 4;
  Rng rng(derive_seed(seed, "permutation-uniformity", 0));
  std::map<std::pair<int, int>, int64_t> counts;
  for (int t = 0; t < draws; ++t) {
    const ExtendedPermutation pi = sample_extended_permutation(d_t, d_data, rng);
    ++counts[{pi.index_map[0], pi.index_map[1]}];
  }
  std::vector<int64_t> observed;
  for (int a = 0; a < d_data; ++a)
    for (int b = 0; b < d_data; ++b)
      if (a != b) observed.push_back(counts[{a, b}]);
  const std::vector<double> expected(observed.size(), static_cast<double>(draws) / observed.size());
  const double stat = chi_square_statistic(observed, expected);
  const double p = chi_square_pvalue(stat, static_cast<int>(observed.size()) - 1);
  result.pass = p > 0.001;
  result.detail = "chi-square over " + std::to_string(observed.size()) + " maps (d_T=2, d_data=4), " +
                  std::to_string(draws) + " draws: stat " + fmt(stat) + ", p " + fmt(p);
  return result;
}

PropertyResult check_embedding_coverage(int episodes, int ways, int active_count, uint64_t seed) {
  PropertyResult result;
  result.name = "embedding-coverage";
  Rng rng(derive_seed(seed, "embedding-coverage", 0));
  std::vector<LabelId> labels(ways);
  for (int i = 0; i < ways; ++i) labels[i] = i;
  std::vector<int64_t> counts(active_count, 0);
  for (int t = 0; t < episodes; ++t) {
    const LabelInjection rho = sample_injection(labels, active_count, rng);
    for (int idx : rho.indices) ++counts[static_cast<size_t>(idx)];
  }
  const double p = static_cast<double>(ways) / active_count;
  const double mean = episodes * p;
  const double band = 4.0 * std::sqrt(episodes * p * (1.0 - p));
  int64_t min_count = counts[0];
  int out_of_band = 0;
  for (int64_t c : counts) {
    min_count = std::min(min_count, c);
    if (std::abs(static_cast<double>(c) - mean) > band) ++out_of_band;
  }
  result.pass = out_of_band == 0 && min_count > 0;
  result.detail = "selection counts over t=" + std::to_string(episodes) + " (K=" + std::to_string(ways) +
                  ", M=" + std::to_string(active_count) + "): mean " + fmt(mean) + " +- " + fmt(band) + ", " +
                  std::to_string(out_of_band) + " outside, min " + std::to_string(min_count);
  return result;
}

PropertyResult check_coordinate_coverage(int episodes, int d_t, int d_data, uint64_t seed) {
  PropertyResult result;
  result.name = "coordinate-coverage";
  Rng rng(derive_seed(seed, "coordinate-coverage", 0));
  std::vector<ExtendedPermutation> pis;
  pis.reserve(episodes);
  for (int t = 0; t < episodes; ++t) pis.push_back(sample_extended_permutation(d_t, d_data, rng));
  const std::vector<int64_t> counts = coordinate_coverage_counts(pis, d_data);
  const double p = static_cast<double>(d_t) / d_data;
  const double mean = episodes * p;
  const double band = 4.0 * std::sqrt(episodes * p * (1.0 - p));
  int out_of_band = 0;
  int64_t min_count = counts[0];
  for (int64_t c : counts) {
    min_count = std::min(min_count, c);
    if (std::abs(static_cast<double>(c) - mean) > band) ++out_of_band;
  }
  result.pass = out_of_band == 0 && min_count > 0;
  result.detail = "coverage over t=" + std::to_string(episodes) + " (d_T=" + std::to_string(d_t) +
                  ", d_data=" + std::to_string(d_data) + "): mean " + fmt(mean) + " +- " + fmt(band) + ", " +
                  std::to_string(out_of_band) + " outside, min " + std::to_string(min_count);
  return result;
}

PropertyResult check_model_gradients(double tolerance, uint64_t seed, double* max_rel_err_out,
                                     const ModelConfig* config_override) {
  PropertyResult result;
  result.name = "whole-model-gradient-check";
  const ModelConfig cfg = config_override ? *config_override : gradcheck_config();

  Rng model_rng(derive_seed(seed, "gradcheck-model", 0));
  TailModel<double> model = TailModel<double>::init(cfg, model_rng);

  const MetaDataset meta = gradcheck_tasks(derive_seed(seed, "gradcheck-tasks", 0));
  SamplerConfig scfg;
  scfg.shot_range = {1};
  scfg.way_range = {2};
  scfg.queries_per_class = 1;
  scfg.d_data = cfg.d_data;
  scfg.active_count = cfg.dictionary_size;
  Rng ep_rng(derive_seed(seed, "gradcheck-episode", 0));
  const Episode ep = sample_episode(meta, scfg, ep_rng);

  auto loss_value = [&]() {
    const Tensor<double> scores = episode_scores(model, ep);
    return episode_loss(scores, ep).at(0);
  };

  {
    Tape tape;
    const Tensor<double> scores = episode_scores(model, ep);
    const Tensor<double> loss = episode_loss(scores, ep);
    model.zero_grad();
    backward(loss);
  }

  double max_rel = 0.0;
  auto params = model.named_parameters();
  for (auto& [name, t] : params) {
    const std::vector<double> analytic =
        t.has_grad() ? t.grad_view() : std::vector<double>(t.size(), 0.0);
    for (size_t i = 0; i < t.size(); ++i) {
      const double w = t.data()[i];
      const double h = 1e-5 * std::max(1.0, std::abs(w));
      t.data()[i] = w + h;
      const double lp = loss_value();
      t.data()[i] = w - h;
      const double lm = loss_value();
      t.data()[i] = w;
      const double fd = (lp - lm) / (2.0 * h);
      const double rel = std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  if (max_rel_err_out) *max_rel_err_out = max_rel;
  result.pass = max_rel < tolerance;
  result.detail = "all parameters vs central finite differences (2-way 1-shot, double): max rel err " +
                  fmt(max_rel) + " (tol " + fmt(tolerance) + ")";
  return result;
}

PropertyResult check_gradient_unbiasedness(int draws, uint64_t seed) {
  PropertyResult result;
  result.name = "gradient-unbiasedness";
  ModelConfig cfg = gradcheck_config();
  cfg.dictionary_size = 8;

  Rng model_rng(derive_seed(seed, "unbiased-model", 0));
  TailModel<double> model = TailModel<double>::init(cfg, model_rng);

  const MetaDataset meta = gradcheck_tasks(derive_seed(seed, "unbiased-tasks", 0));
  SamplerConfig scfg;
  scfg.shot_range = {2};
  scfg.way_range = {2};
  scfg.queries_per_class = 2;
  scfg.d_data = cfg.d_data;
  scfg.active_count = cfg.dictionary_size;
  Rng ep_rng(derive_seed(seed, "unbiased-episode", 0));
  Episode ep = sample_episode(meta, scfg, ep_rng);  // frozen samples and pi

  const int m = cfg.dictionary_size;
  const int d_label = cfg.d_label;
  const int k = ep.way();
  const double ratio = static_cast<double>(k) / m;
  const size_t dict_size = static_cast<size_t>(m) * d_label;
  std::vector<double> sum(dict_size, 0.0), sum_sq(dict_size, 0.0);
  std::vector<int64_t> selected(m, 0);

  Rng rho_rng(derive_seed(seed, "unbiased-rho", 0));
  for (int t = 0; t < draws; ++t) {
    ep.rho = sample_injection(ep.way_labels, m, rho_rng);
    for (int idx : ep.rho.indices) ++selected[static_cast<size_t>(idx)];
    Tape tape;
    const Tensor<double> scores = episode_scores(model, ep);
    const Tensor<double> loss = episode_loss(scores, ep);
    model.zero_grad();
    backward(loss);
    const auto& g = model.dict.embeddings.grad_view();
    for (size_t i = 0; i < dict_size; ++i) {
      sum[i] += g[i];
      sum_sq[i] += g[i] * g[i];
    }
  }

  // Per component: |mean - (K/M) * conditional mean| <= 3 * SE(mean).
  int violations = 0;
  int64_t checked = 0;
  for (int j = 0; j < m; ++j) {
    if (selected[j] == 0) continue;
    for (int c = 0; c < d_label; ++c) {
      const size_t i = static_cast<size_t>(j) * d_label + c;
      const double mean_all = sum[i] / draws;
      const double mean_cond = sum[i] / static_cast<double>(selected[j]);
      const double var = std::max(sum_sq[i] / draws - mean_all * mean_all, 0.0);
      const double se = std::sqrt(var / draws);
      ++checked;
      if (std::abs(mean_all - ratio * mean_cond) > 3.0 * se + 1e-12) ++violations;
    }
  }
  result.pass = violations == 0;
  result.detail = std::to_string(draws) + " fresh injections on a frozen episode (K=" + std::to_string(k) +
                  ", M=" + std::to_string(m) + "): " + std::to_string(violations) + "/" +
                  std::to_string(checked) + " components outside 3 SE of (K/M) * conditional mean";
  return result;
}

template <typename S>
std::vector<PropertyResult> run_property_suite(const TailModel<S>& model, const VerifySettings& settings) {
  const double logit_tol =
      settings.logit_tolerance > 0 ? settings.logit_tolerance : (sizeof(S) == 8 ? 1e-10 : 2e-3);
  const MetaDataset meta = property_task_grid(model.config.d_data, settings.seed);

  std::vector<PropertyResult> results;
  results.push_back(check_order_invariance(model, meta, settings.episodes, settings.permutations, logit_tol,
                                           settings.seed));
  results.push_back(check_label_reindexing(model, meta, settings.episodes, settings.permutations, settings.seed));
  results.push_back(
      check_feature_equivariance(model, meta, settings.episodes, settings.permutations, settings.seed));
  results.push_back(check_inline_equivalence(model, meta, std::min(settings.episodes, 100), 4, settings.seed));
  results.push_back(check_injection_uniformity(settings.uniformity_draws, settings.seed));
  results.push_back(check_permutation_uniformity(settings.uniformity_draws, settings.seed));
  results.push_back(check_embedding_coverage(settings.coverage_episodes, 5,
                                             std::min(50, model.config.dictionary_size), settings.seed));
  results.push_back(check_coordinate_coverage(settings.coverage_episodes, std::min(32, model.config.d_data),
                                              std::min(64, model.config.d_data * 2), settings.seed));
  if (settings.gradcheck) {
    results.push_back(check_model_gradients(1e-4, settings.seed));
    results.push_back(check_gradient_unbiasedness(2000, settings.seed));
  }
  return results;
}

std::vector<PropertyResult> run_property_suite_fresh(const ModelConfig& mcfg, Precision precision,
                                                     const VerifySettings& settings) {
  Rng rng(derive_seed(settings.seed, "verify-model", 0));
  if (precision == Precision::f64) {
    TailModel<double> model = TailModel<double>::init(mcfg, rng);
    return run_property_suite(model, settings);
  }
  TailModel<float> model = TailModel<float>::init(mcfg, rng);
  return run_property_suite(model, settings);
}

bool all_passed(const std::vector<PropertyResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

template PropertyResult check_order_invariance<float>(const TailModel<float>&, const MetaDataset&, int, int,
                                                      double, uint64_t);
template PropertyResult check_order_invariance<double>(const TailModel<double>&, const MetaDataset&, int, int,
                                                       double, uint64_t);
template PropertyResult check_label_reindexing<float>(const TailModel<float>&, const MetaDataset&, int, int,
                                                      uint64_t);
template PropertyResult check_label_reindexing<double>(const TailModel<double>&, const MetaDataset&, int, int,
                                                       uint64_t);
template PropertyResult check_feature_equivariance<float>(const TailModel<float>&, const MetaDataset&, int,
                                                          int, uint64_t);
template PropertyResult check_feature_equivariance<double>(const TailModel<double>&, const MetaDataset&, int,
                                                           int, uint64_t);
template PropertyResult check_inline_equivalence<float>(const TailModel<float>&, const MetaDataset&, int, int,
                                                        uint64_t);
template PropertyResult check_inline_equivalence<double>(const TailModel<double>&, const MetaDataset&, int,
                                                         int, uint64_t);
template std::vector<PropertyResult> run_property_suite<float>(const TailModel<float>&, const VerifySettings&);
template std::vector<PropertyResult> run_property_suite<double>(const TailModel<double>&,
                                                                const VerifySettings&);

}  // namespace tail
