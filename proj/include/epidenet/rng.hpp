#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace epidenet {

// Deterministic splitmix64 generator. All randomness in the toolkit flows
// through this so that runs are reproducible from a single root seed,
// independent of platform or standard-library internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return std::ldexp(static_cast<double>(next_u64() >> 11), -53); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller, one cached value.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // In-place Fisher-Yates shuffle with a pinned visitation order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream: hash of (root, stream id). Two distinct stream
  // ids give statistically independent sequences from the same root.
  static uint64_t child_seed(uint64_t root, uint64_t stream) {
    Rng r(root ^ (0x517cc1b727220a95ULL + stream * 0x2545f4914f6cdd1dULL));
    return r.next_u64();
  }

  static uint64_t child_seed(uint64_t root, uint64_t a, uint64_t b) {
    return child_seed(child_seed(root, a), b ^ 0x6a09e667f3bcc909ULL);
  }

 private:
  uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace epidenet
