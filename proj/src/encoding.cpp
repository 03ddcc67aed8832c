#include "encoding.hpp"

#include <cmath>
#include <unordered_set>

namespace tail {

void ExtendedPermutation::validate() const {
  if (source_dim < 1 || source_dim > target_dim)
    fail(ErrorCode::dim_too_large, "extended permutation needs 1 <= d_T <= d_data, got d_T=" +
                                       std::to_string(source_dim) + " d_data=" + std::to_string(target_dim));
  if (static_cast<int>(index_map.size()) != source_dim)
    fail(ErrorCode::length_mismatch, "extended permutation: index_map length");
  std::unordered_set<int> seen;
  for (int v : index_map) {
    if (v < 0 || v >= target_dim) fail(ErrorCode::dim_too_large, "extended permutation: index out of range");
    if (!seen.insert(v).second) fail(ErrorCode::invalid_config, "extended permutation: duplicate target index");
  }
}

ExtendedPermutation sample_extended_permutation(int d_t, int d_data, Rng& rng) {
  if (d_t < 1 || d_t > d_data)
    fail(ErrorCode::dim_too_large, "sample_extended_permutation: need 1 <= d_T <= d_data, got d_T=" +
                                       std::to_string(d_t) + " d_data=" + std::to_string(d_data));
  ExtendedPermutation pi;
  pi.source_dim = d_t;
  pi.target_dim = d_data;
  pi.index_map = rng.sample_distinct(d_t, d_data);
  return pi;
}

GaussianProjection sample_gaussian_projection(int d_t, int d_data, Rng& rng) {
  if (d_t < 1) fail(ErrorCode::invalid_config, "sample_gaussian_projection: d_T must be positive");
  GaussianProjection g;
  g.source_dim = d_t;
  g.target_dim = d_data;
  g.matrix.resize(static_cast<size_t>(d_t) * d_data);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d_t));
  for (double& v : g.matrix) v = rng.normal() * stddev;
  return g;
}

ExtendedPermutation identity_prefix_permutation(int d_t, int d_data) {
  if (d_t < 1 || d_t > d_data)
    fail(ErrorCode::dim_too_large, "identity_prefix_permutation: need 1 <= d_T <= d_data");
  ExtendedPermutation pi;
  pi.source_dim = d_t;
  pi.target_dim = d_data;
  pi.index_map.resize(d_t);
  for (int i = 0; i < d_t; ++i) pi.index_map[i] = i;
  return pi;
}

Projection sample_projection(ProjectionKind kind, int d_t, int d_data, Rng& rng) {
  Projection p;
  p.kind = kind;
  switch (kind) {
    case ProjectionKind::extended_permutation:
      p.perm = sample_extended_permutation(d_t, d_data, rng);
      break;
    case ProjectionKind::gaussian:
      p.gaussian = sample_gaussian_projection(d_t, d_data, rng);
      break;
    case ProjectionKind::identity:
      p.perm = identity_prefix_permutation(d_t, d_data);
      break;
  }
  return p;
}

int Projection::source_dim() const {
  return kind == ProjectionKind::gaussian ? gaussian.source_dim : perm.source_dim;
}

int Projection::target_dim() const {
  return kind == ProjectionKind::gaussian ? gaussian.target_dim : perm.target_dim;
}

std::vector<double> Projection::apply(const std::vector<double>& x) const {
  if (kind == ProjectionKind::gaussian) {
    if (static_cast<int>(x.size()) != gaussian.source_dim)
      fail(ErrorCode::length_mismatch, "projection: feature length vs d_T");
    std::vector<double> out(gaussian.target_dim, 0.0);
    for (int j = 0; j < gaussian.target_dim; ++j) {
      double acc = 0.0;
      const double* row = gaussian.matrix.data() + static_cast<size_t>(j) * gaussian.source_dim;
      for (int i = 0; i < gaussian.source_dim; ++i) acc += row[i] * x[i];
      out[j] = acc;
    }
    return out;
  }
  return apply_projection(perm, x);
}

std::vector<double> apply_projection(const ExtendedPermutation& pi, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != pi.source_dim)
    fail(ErrorCode::length_mismatch, "apply_projection: feature length " + std::to_string(x.size()) +
                                         " vs d_T=" + std::to_string(pi.source_dim));
  std::vector<double> out(pi.target_dim, 0.0);
  for (int i = 0; i < pi.source_dim; ++i) out[static_cast<size_t>(pi.index_map[i])] = x[i];
  return out;
}

ExtendedPermutation compose_with_inverse(const ExtendedPermutation& pi, const std::vector<int>& sigma) {
  if (static_cast<int>(sigma.size()) != pi.source_dim)
    fail(ErrorCode::length_mismatch, "compose_with_inverse: sigma length vs d_T");
  ExtendedPermutation out = pi;
  // out(sigma(i)) = pi(i)  <=>  out(j) = pi(sigma^-1(j))
  for (int i = 0; i < pi.source_dim; ++i) out.index_map[static_cast<size_t>(sigma[i])] = pi.index_map[i];
  return out;
}

std::vector<int64_t> coordinate_coverage_counts(const std::vector<ExtendedPermutation>& episodes, int d_data) {
  std::vector<int64_t> counts(d_data, 0);
  for (const auto& pi : episodes) {
    if (pi.target_dim != d_data) fail(ErrorCode::shape_mismatch, "coordinate_coverage_counts: mixed d_data");
    for (int j : pi.index_map) ++counts[static_cast<size_t>(j)];
  }
  return counts;
}

}  // namespace tail
