#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace rwz {

// SplitMix64 step; used for seed derivation and stream splitting.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic seed derivation from a master seed and a list of tags
// (replication index, episode index, purpose, ...).  The mapping is part of
// the reproducibility contract: identical (master, tags) always produce the
// same stream.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = master ^ 0xD1B54A32D192ED03ULL;
  splitmix64(s);
  for (std::uint64_t t : tags) {
    s ^= t + 0x9E3779B97F4A7C15ULL + (s << 6) + (s >> 2);
    splitmix64(s);
  }
  return splitmix64(s);
}

// xoshiro256++ with explicitly pinned sampling algorithms.  Standard library
// distributions are not bit-stable across implementations, so uniform,
// normal and categorical draws are implemented here directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in {0, ..., n-1} by rejection; unbiased.
  int uniform_int(int n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
      draw = next_u64();
    } while (draw >= limit);
    return static_cast<int>(draw % bound);
  }

  // Standard normal via Box-Muller; the spare is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Index sampled from a probability vector by inverse CDF scan.
  int categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  double rademacher(double scale) { return (next_u64() >> 63) ? scale : -scale; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rwz
