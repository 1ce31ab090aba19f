#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace diffgap {

// Deterministic random source. Uniform and normal draws are computed here
// rather than through <random> distributions so streams are reproducible
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent child stream keyed by name, e.g. Rng::substream(seed, "corpus").
  static Rng substream(std::uint64_t seed, std::string_view name);
  static Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

}  // namespace diffgap
