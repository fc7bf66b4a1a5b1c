#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dropcluster {

// Deterministic random source. All randomness in the project flows through
// instances of this class; there is no global RNG. The engine is mt19937_64
// (sequence fixed by the standard) and every distribution transform below is
// hand-rolled, so a given (seed, stream, call sequence) reproduces bit-exactly
// on any platform.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Independent child stream derived from (seed, stream, id).
  RandomSource child(std::uint64_t id) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev);
  // Bernoulli with success probability p.
  bool bernoulli(double p);
  // Poisson with the given mean.
  std::uint64_t poisson(double mean);

  // k distinct values from {0, ..., n-1}, ascending order not guaranteed.
  std::vector<int> sample_without_replacement(int n, int k);

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace dropcluster
