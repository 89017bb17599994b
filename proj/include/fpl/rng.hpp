#pragma once

// Random number plumbing.
//
// Sequential streams use std::mt19937_64, whose output sequence is fixed by
// the C++ standard. The standard <random> distributions are NOT pinned across
// library implementations, so every conversion from raw 64-bit words to
// doubles, bounded integers and normals is done here.
//
// Counter-based draws (used for per-particle diffusion noise) hash
// (key, step, particle, component) through the SplitMix64 finalizer, so a draw
// never depends on the order in which particles are visited.
//
// Stream version: 1. Changing anything in this file changes every seeded
// result in the project; bump kRngVersion when that happens.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace fpl {

inline constexpr int kRngVersion = 1;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named sub-stream `name` derived from a master seed.
/// Names in use: "init", "pairing", "ties", "diffusion".
constexpr std::uint64_t sub_seed(std::uint64_t master, std::string_view name) noexcept {
  return splitmix64(master ^ splitmix64(fnv1a64(name)));
}

/// 53-bit uniform double in [0, 1).
constexpr double to_unit_double(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double uniform() { return to_unit_double(engine_()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound) by rejection on the top of the range.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % bound;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Counter-based standard normal: a pure function of its four arguments.
inline double counter_normal(std::uint64_t key, std::uint64_t step, std::uint64_t particle,
                             std::uint64_t component) noexcept {
  std::uint64_t base = splitmix64(key ^ splitmix64(step ^ splitmix64(particle)));
  base = splitmix64(base ^ (component * 0xd1b54a32d192ed03ULL));
  const double u1 = 1.0 - to_unit_double(splitmix64(base));
  const double u2 = to_unit_double(splitmix64(base ^ 0x5851f42d4c957f2dULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace fpl
