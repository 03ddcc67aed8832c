#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tail {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

PrototypeSet compute_prototypes(const Episode& episode) {
  PrototypeSet set;
  // Y_T order, restricted to the episode's labels.
  std::vector<LabelId> ordered = episode.way_labels;
  std::sort(ordered.begin(), ordered.end());
  const int d = episode.task->feature_dim;
  for (LabelId y : ordered) {
    std::vector<double> proto(d, 0.0);
    int count = 0;
    for (const auto& s : episode.support)
      if (s.label == y) {
        for (int j = 0; j < d; ++j) proto[j] += s.features[j];
        ++count;
      }
    if (count == 0) fail(ErrorCode::invalid_config, "protohead: label without support samples");
    for (double& v : proto) v /= count;
    set.labels.push_back(y);
    set.prototypes.push_back(std::move(proto));
  }
  return set;
}

std::vector<LabelId> protohead_predict(const Episode& episode) {
  const PrototypeSet set = compute_prototypes(episode);
  std::vector<LabelId> out;
  out.reserve(episode.query.size());
  for (const auto& qs : episode.query) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < set.prototypes.size(); ++c) {
      const double dist = squared_distance(qs.features, set.prototypes[c]);
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(c);
      }
    }
    out.push_back(set.labels[static_cast<size_t>(best)]);
  }
  return out;
}

std::vector<LabelId> linear_probe_fit_predict(const Episode& episode, const ProbeConfig& config) {
  if (config.steps < 0) fail(ErrorCode::invalid_config, "linear probe: negative step count");
  if (!(config.learning_rate > 0)) fail(ErrorCode::invalid_config, "linear probe: learning rate must be positive");

  std::vector<LabelId> classes = episode.way_labels;
  std::sort(classes.begin(), classes.end());
  const int k = static_cast<int>(classes.size());
  const int d = episode.task->feature_dim;
  const int n = episode.support_size();

  // Per-coordinate standardization from support statistics.
  std::vector<double> mean(d, 0.0), stddev(d, 0.0);
  for (const auto& s : episode.support)
    for (int j = 0; j < d; ++j) mean[j] += s.features[j];
  for (double& v : mean) v /= n;
  for (const auto& s : episode.support)
    for (int j = 0; j < d; ++j) stddev[j] += (s.features[j] - mean[j]) * (s.features[j] - mean[j]);
  for (double& v : stddev) v = std::sqrt(v / n) + 1e-8;

  auto standardize = [&](const std::vector<double>& x) {
    std::vector<double> z(d);
    for (int j = 0; j < d; ++j) z[j] = (x[j] - mean[j]) / stddev[j];
    return z;
  };

  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  xs.reserve(n);
  for (const auto& s : episode.support) {
    xs.push_back(standardize(s.features));
    const auto it = std::lower_bound(classes.begin(), classes.end(), s.label);
    ys.push_back(static_cast<int>(it - classes.begin()));
  }

  // weights[k][d], biases[k], zero init; full-batch softmax-regression GD.
  std::vector<double> w(static_cast<size_t>(k) * d, 0.0), b(k, 0.0);
  std::vector<double> logits(k), probs(k);
  std::vector<double> gw(static_cast<size_t>(k) * d), gb(k);
  for (int step = 0; step < config.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const std::vector<double>& x = xs[static_cast<size_t>(i)];
      for (int c = 0; c < k; ++c) {
        double acc = b[c];
        const double* wrow = w.data() + static_cast<size_t>(c) * d;
        for (int j = 0; j < d; ++j) acc += wrow[j] * x[j];
        logits[c] = acc;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        probs[c] = std::exp(logits[c] - mx);
        sum += probs[c];
      }
      for (int c = 0; c < k; ++c) {
        const double g = probs[c] / sum - (c == ys[static_cast<size_t>(i)] ? 1.0 : 0.0);
        gb[c] += g;
        double* grow = gw.data() + static_cast<size_t>(c) * d;
        for (int j = 0; j < d; ++j) grow[j] += g * x[j];
      }
    }
    const double lr = config.learning_rate / n;
    for (int c = 0; c < k; ++c) {
      b[c] -= lr * gb[c];
      double* wrow = w.data() + static_cast<size_t>(c) * d;
      const double* grow = gw.data() + static_cast<size_t>(c) * d;
      for (int j = 0; j < d; ++j) wrow[j] -= lr * (grow[j] + config.weight_decay * n * wrow[j]);
    }
  }

  std::vector<LabelId> out;
  out.reserve(episode.query.size());
  for (const auto& qs : episode.query) {
    const std::vector<double> x = standardize(qs.features);
    int best = 0;
    double best_logit = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double acc = b[c];
      const double* wrow = w.data() + static_cast<size_t>(c) * d;
      for (int j = 0; j < d; ++j) acc += wrow[j] * x[j];
      if (acc > best_logit) {
        best_logit = acc;
        best = c;
      }
    }
    out.push_back(classes[static_cast<size_t>(best)]);
  }
  return out;
}

std::vector<LabelId> BayesOracleAlgorithm::predict(const Episode& episode) const {
  if (!episode.task->is_synthetic()) fail(ErrorCode::not_synthetic, "bayes oracle needs a synthetic task");
  std::vector<LabelId> ordered = episode.way_labels;
  std::sort(ordered.begin(), ordered.end());
  std::vector<LabelId> out;
  out.reserve(episode.query.size());
  for (const auto& qs : episode.query) {
    int best = ordered.front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (LabelId y : ordered) {
      const double dist = squared_distance(qs.features, episode.task->synthetic->means[static_cast<size_t>(y)]);
      if (dist < best_dist) {
        best_dist = dist;
        best = y;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace tail
