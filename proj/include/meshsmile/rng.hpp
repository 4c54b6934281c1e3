#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace meshsmile {

// Deterministic random stream. Every random decision in the library flows
// through one of these, and derived streams are obtained with split() rather
// than by sharing a generator, so a run is reproducible from a single seed
// regardless of evaluation order. The core is splitmix64, which is identical
// on every platform and standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                            // [0, 1)
  double uniform(double lo, double hi);        // [lo, hi)
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n), n > 0
  double normal(double mean = 0.0, double sd = 1.0);
  double gumbel();                             // -log(-log U)

  // Derived stream addressed by (role, index). Depends only on the seed this
  // stream was constructed with, never on how much of it has been consumed.
  Rng split(std::string_view role, std::uint64_t index = 0) const;

  std::uint64_t seed() const { return seed_; }

  // Fisher-Yates, matching uniform_int draws.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::uint64_t seed_ = 0;
  std::uint64_t state_ = 0;
};

}  // namespace meshsmile
