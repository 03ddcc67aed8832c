#pragma once

#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace tail {

// Injective coordinate map [d_T] -> [d_data]: source coordinate i lands on
// target coordinate index_map[i], every other target coordinate is exactly 0.
struct ExtendedPermutation {
  int source_dim = 0;
  int target_dim = 0;
  std::vector<int> index_map;  // source_dim distinct entries in [0, target_dim)

  void validate() const;
};

// Dense random projection ablation: target_dim x source_dim matrix with
// i.i.d. N(0, 1/source_dim) entries, frozen after sampling.
struct GaussianProjection {
  int source_dim = 0;
  int target_dim = 0;
  std::vector<double> matrix;  // row-major, target_dim x source_dim
};

enum class ProjectionKind {
  extended_permutation,
  gaussian,
  identity,  // fixed identity-prefix map (the no-projection ablation)
};

// Per-episode feature projection; exactly one variant is populated.
struct Projection {
  ProjectionKind kind = ProjectionKind::extended_permutation;
  ExtendedPermutation perm;
  GaussianProjection gaussian;

  int source_dim() const;
  int target_dim() const;
  std::vector<double> apply(const std::vector<double>& x) const;
};

// Uniform over all d_data!/(d_data - d_T)! injections, via partial
// Fisher-Yates over the target coordinates.
ExtendedPermutation sample_extended_permutation(int d_t, int d_data, Rng& rng);

GaussianProjection sample_gaussian_projection(int d_t, int d_data, Rng& rng);

ExtendedPermutation identity_prefix_permutation(int d_t, int d_data);

Projection sample_projection(ProjectionKind kind, int d_t, int d_data, Rng& rng);

// pi composed with the inverse of a source-coordinate permutation sigma:
// result(i) = pi(sigma^-1(i)).
ExtendedPermutation compose_with_inverse(const ExtendedPermutation& pi, const std::vector<int>& sigma);

std::vector<double> apply_projection(const ExtendedPermutation& pi, const std::vector<double>& x);

// N_j = number of episodes whose index_map hits target coordinate j.
std::vector<int64_t> coordinate_coverage_counts(const std::vector<ExtendedPermutation>& episodes, int d_data);

}  // namespace tail
