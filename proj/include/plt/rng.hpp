#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace plt {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-trial seed derivation: seed = hash(root, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) ^ (index * 0xd1342543de82ef95ULL + 1));
}

/// Seeded stream with platform-independent bounded draws. std::uniform_int_distribution
/// is implementation-defined, so transcripts would differ across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t limit = std::uint64_t(0) - (std::uint64_t(0) - bound) % bound;  // largest multiple of bound, mod 2^64
    for (;;) {
      std::uint64_t x = engine_();
      if (limit == 0 || x < limit) return x % bound;
    }
  }

  /// Uniform in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

  bool coin() { return (engine_() >> 63) != 0; }

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace plt
