#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tail {

// All randomness in the project flows from a single root seed. Sub-streams are
// derived as derive_seed(root, stream_name, index), where the stream name is
// FNV-1a hashed and the result mixed with SplitMix64:
//
//   derive_seed(root, s, i) = splitmix64(splitmix64(root ^ fnv1a64(s)) ^ i)
//
// Distribution sampling is implemented here rather than via <random>
// distributions, whose output is not pinned by the standard; with a fixed
// engine (std::mt19937_64) the sampled values are identical on any platform.

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);
uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index);

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection. n must be > 0.
  uint64_t uniform_below(uint64_t n);

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  // Standard normal via Box-Muller (no state carried between calls).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Partial Fisher-Yates: k distinct values drawn uniformly from [0, n),
  // i.e. a uniform sample from all n!/(n-k)! injections [k] -> [n].
  std::vector<int> sample_distinct(int k, int n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace tail
