#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ncsc {

// xoshiro256** seeded through splitmix64. The algorithm is fixed so that every
// seeded artifact (datasets, shuffles, initial weights) is reproducible across
// platforms and implementations; std:: distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (both outputs used).
  double normal();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ncsc
