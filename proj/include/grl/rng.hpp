#pragma once

// Counter-based deterministic random streams.
//
// Every consumer of randomness (environment, agent, prior draw of the true
// environment, ...) owns its own stream keyed by (seed, role), so that the
// agent's internal sampling never shifts the environment's draws.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>

namespace grl {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes several integers into one 64-bit key.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

enum class StreamRole : std::uint64_t {
  environment = 1,
  agent = 2,
  truth = 3,
  policy = 4,
  test = 5,
};

class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream() : RandomStream(0, StreamRole::test) {}
  RandomStream(std::uint64_t seed, StreamRole role) : key_(derive_seed({seed, static_cast<std::uint64_t>(role)})) {}
  RandomStream(std::uint64_t seed, std::uint64_t seed_index, StreamRole role)
      : key_(derive_seed({seed, seed_index, static_cast<std::uint64_t>(role)})) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Inverse-CDF draw from an (unnormalized, nonnegative) weight vector.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("categorical draw from zero weights");
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last = i;
      if (u < acc) return i;
    }
    return last;
  }

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace grl
