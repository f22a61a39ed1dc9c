#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace lesionforge {

// Counter-free deterministic RNG (xoshiro256++ seeded via splitmix64).
// All distributions are hand-rolled so streams do not depend on the
// standard library implementation; identical seeds give identical
// streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
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

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller (one value per draw; pair partner discarded
  // so the stream position does not depend on call parity).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates shuffle driven by this stream.
  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = static_cast<decltype(i)>(next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(first[i], first[j]);
    }
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

// FNV-1a over arbitrary bytes; used for seed fan-out and provenance hashes.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stage-keyed seed derivation: every stochastic stage of a run pulls its seed
// from the master seed and a stage name, so any stage can be reproduced in
// isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
  std::uint64_t x = master ^ fnv1a(stage);
  return Rng::splitmix64(x);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index) {
  std::uint64_t x = derive_seed(master, stage) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return Rng::splitmix64(x);
}

}  // namespace lesionforge
