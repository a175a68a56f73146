#pragma once

#include <cstdint>
#include <random>

namespace sonamatch {

// Deterministic random source. The engine is mt19937_64, whose output
// sequence is fixed by the standard, and every distribution here is a
// hand-written transform of that stream. std::uniform_real_distribution
// and friends are implementation-defined, so using them would tie results
// to a particular standard library; these transforms keep runs
// reproducible bit for bit for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits, every value an exact double.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform index in [0, n). Multiply-shift map; the bias for n below
  // 2^32 is under 2^-32 and identical on every platform.
  std::size_t index(std::size_t n) {
    using u128 = unsigned __int128;
    return static_cast<std::size_t>(
        (static_cast<u128>(next_u64()) * static_cast<u128>(n)) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is
  // cached so draws stay in lockstep with the engine.
  double normal();

  // Gamma with unit mean and the given coefficient of variation
  // (Marsaglia-Tsang squeeze method).
  double gamma_unit_mean(double cv);

  // Derive an independent stream seed, e.g. one per image index.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace sonamatch
