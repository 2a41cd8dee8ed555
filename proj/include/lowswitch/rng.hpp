#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lowswitch {

// Purpose tags keep independent consumers of randomness on disjoint streams.
enum class StreamTag : std::uint64_t {
  kTransition = 1,
  kReward = 2,
  kPlanner = 3,
  kGlmRestart = 4,
  kEnvGen = 5,
  kLemma = 6,
  kPolicy = 7,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream keyed by (seed, episode, step, tag). Two streams with
// the same key produce the same sequence on every platform, independent of
// the order in which other streams were consumed.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t episode, std::uint64_t step, StreamTag tag)
      : key_(mix_key(seed, episode, step, static_cast<std::uint64_t>(tag))) {}

  explicit Stream(std::uint64_t seed) : Stream(seed, 0, 0, StreamTag::kLemma) {}

  std::uint64_t next_u64() { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

  // Uniform on [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_int(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller; one normal per call, the partner is discarded so the
  // sequence position depends only on the call count.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t mix_key(std::uint64_t seed, std::uint64_t episode,
                                         std::uint64_t step, std::uint64_t tag) {
    std::uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    h = splitmix64(h ^ episode);
    h = splitmix64(h ^ (step + 0x14057b7ef767814fULL));
    return splitmix64(h ^ (tag * 0x2545f4914f6cdd1dULL));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lowswitch
