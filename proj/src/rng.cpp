#include "meshsmile/rng.hpp"

#include <cmath>

namespace meshsmile {

namespace {

std::uint64_t splitmix(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

std::uint64_t Rng::next_u64() { return splitmix(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // Rejection sampling to keep the draw unbiased.
  std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal(double mean, double sd) {
  // Box-Muller; draws two uniforms per sample to stay stateless.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

double Rng::gumbel() {
  double u = uniform();
  if (u < 1e-300) u = 1e-300;
  if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
  return -std::log(-std::log(u));
}

Rng Rng::split(std::string_view role, std::uint64_t index) const {
  std::uint64_t s = seed_;
  std::uint64_t mix = fnv1a(role);
  s ^= splitmix(mix);
  s ^= index * 0x9e3779b97f4a7c15ULL;
  std::uint64_t derived = splitmix(s);
  return Rng(derived);
}

}  // namespace meshsmile
