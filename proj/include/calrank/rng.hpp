#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace calrank {

// 64-bit FNV-1a. Used for seed derivation and stage content hashes.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic RNG. mt19937_64 has a standard-specified output sequence, and
// all bounded draws below avoid std::uniform_int_distribution (whose output is
// implementation-defined), so streams are reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Sub-stream for an independent purpose, e.g. derive(seed, "corpus").
  static Rng derive(std::uint64_t seed, std::string_view purpose) {
    return Rng(fnv1a64(purpose, seed ^ 0x9e3779b97f4a7c15ull));
  }

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, n). Modulo bias is below 2^-53 for desk-scale n.
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace calrank
