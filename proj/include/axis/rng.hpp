#pragma once

// Seeded, platform-independent random number generation.
//
// Engine: xoshiro256** seeded through SplitMix64 (Blackman & Vigna).
// Distributions are implemented by hand instead of <random> because the
// standard leaves distribution algorithms unspecified; these produce the
// same streams on every platform for a given seed.
//
// Independent child streams are derived with derive_seed(seed, key): the
// key (an index or an FNV-1a hash of a name) is mixed into the parent
// seed through one SplitMix64 step.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace axis::rng {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t state = seed ^ (0x9E3779B97F4A7C15ull * (key + 1));
  return splitmix64_next(state);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return derive_seed(seed, fnv1a(name));
}

class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

// Uniform in [0, 1) with 53 random bits.
inline double uniform_double(Xoshiro256& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, bound), unbiased via rejection.
inline std::uint64_t uniform_below(Xoshiro256& gen, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t value = gen();
    if (value >= threshold) return value % bound;
  }
}

// Standard normal via Box-Muller (one deviate per pair of uniforms).
inline double normal(Xoshiro256& gen) {
  double u1 = uniform_double(gen);
  while (u1 <= 0.0) u1 = uniform_double(gen);
  const double u2 = uniform_double(gen);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle(std::vector<T>& items, Xoshiro256& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

// k distinct indices from [0, n), in selection order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_indices(Xoshiro256& gen, std::size_t n,
                                               std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(uniform_below(gen, n - i));
    std::swap(pool[i], pool[j]);
    picked.push_back(pool[i]);
  }
  return picked;
}

}  // namespace axis::rng
