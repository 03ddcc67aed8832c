#include "labels.hpp"

namespace tail {

LabelInjection sample_injection(const std::vector<LabelId>& labels, int active_count, Rng& rng) {
  const int k = static_cast<int>(labels.size());
  if (k > active_count)
    fail(ErrorCode::too_many_labels, "episode has " + std::to_string(k) + " labels but only " +
                                         std::to_string(active_count) + " active embeddings");
  LabelInjection rho;
  rho.labels = labels;
  rho.indices = rng.sample_distinct(k, active_count);
  return rho;
}

}  // namespace tail
