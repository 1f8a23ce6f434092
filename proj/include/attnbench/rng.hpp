#pragma once

#include <cmath>
#include <cstdint>

namespace attnbench {

// SplitMix64 finalizer. Used both as the PRNG step and as the mixing
// function for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a child seed from (base, stream, index). All seed fan-out in the
// project goes through this function so the derivation is documented in one
// place: each component is folded in with the SplitMix64 finalizer plus the
// golden-ratio increment, so changing any component changes the result.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t h = mix64(base + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ (stream + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
  h = mix64(h ^ (index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
  return h;
}

// Deterministic, explicitly seeded PRNG (SplitMix64). Identical output on
// every platform; distributions below are hand-rolled so results do not
// depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n). Lemire's multiply-shift; slight modulo bias
  // is irrelevant at the n used here (dataset sizes), and it stays
  // platform-independent.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller (the cached second value keeps draws
  // cheap without changing the stream semantics).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Truncated normal with |z| <= 2, scaled by stddev.
  double truncated_normal(double stddev) {
    double z = gaussian();
    while (std::fabs(z) > 2.0) z = gaussian();
    return z * stddev;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace attnbench
