#pragma once

#include <memory>
#include <string>
#include <vector>

#include "episode.hpp"

namespace tail {

// Anything that labels an episode's queries given its support set.
class EpisodeAlgorithm {
 public:
  virtual ~EpisodeAlgorithm() = default;
  virtual std::vector<LabelId> predict(const Episode& episode) const = 0;
  virtual std::string name() const = 0;
};

struct PrototypeSet {
  std::vector<LabelId> labels;                 // episode labels, Y_T order
  std::vector<std::vector<double>> prototypes; // mean support feature per label
};

PrototypeSet compute_prototypes(const Episode& episode);

// Nearest class prototype under squared Euclidean distance on the raw d_T
// features; ties go to the label earliest in Y_T order.
std::vector<LabelId> protohead_predict(const Episode& episode);

struct ProbeConfig {
  int steps = 100;
  double learning_rate = 0.5;
  double weight_decay = 0.0;
};

// Per-episode multinomial logistic regression fit by full-batch gradient
// descent from zero init on per-coordinate standardized features.
std::vector<LabelId> linear_probe_fit_predict(const Episode& episode, const ProbeConfig& config);

class ProtoHeadAlgorithm : public EpisodeAlgorithm {
 public:
  std::vector<LabelId> predict(const Episode& episode) const override { return protohead_predict(episode); }
  std::string name() const override { return "protohead"; }
};

class LinearProbeAlgorithm : public EpisodeAlgorithm {
 public:
  explicit LinearProbeAlgorithm(ProbeConfig config = {}) : config_(config) {}
  std::vector<LabelId> predict(const Episode& episode) const override {
    return linear_probe_fit_predict(episode, config_);
  }
  std::string name() const override { return "linear_probe"; }

 private:
  ProbeConfig config_;
};

// Nearest true mean; optimal for the synthetic mixtures. Test/benchmark aid.
class BayesOracleAlgorithm : public EpisodeAlgorithm {
 public:
  std::vector<LabelId> predict(const Episode& episode) const override;
  std::string name() const override { return "bayes_oracle"; }
};

class ConstantAlgorithm : public EpisodeAlgorithm {
 public:
  std::vector<LabelId> predict(const Episode& episode) const override {
    return std::vector<LabelId>(episode.query.size(), episode.way_labels.front());
  }
  std::string name() const override { return "constant"; }
};

}  // namespace tail
