#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace prx {

// Platform-independent pseudo-random source. std::mt19937_64 output is fully
// specified; the distribution helpers here avoid the implementation-defined
// standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t below(std::uint64_t n);
  int range(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  bool bernoulli(double p) { return uniform01() < p; }
  std::size_t weighted(const std::vector<double>& weights);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(below(v.size()))];
  }

 private:
  std::mt19937_64 engine_;
};

// Deterministic per-item sub-seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace prx
