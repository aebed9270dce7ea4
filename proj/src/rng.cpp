#include "prx/rng.hpp"

#include "prx/errors.hpp"
#include "prx/hashing.hpp"

namespace prx {

// Rejection sampling keeps the result unbiased and identical across platforms.
std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "Rng::below(0)");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

std::size_t Rng::weighted(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w > 0.0 ? w : 0.0;
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights sum to zero");
  double r = uniform01() * total;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  return last;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return hashing::mix64(seed ^ hashing::mix64(index + 0x9e3779b97f4a7c15ull));
}

}  // namespace prx
