#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace heatflow {

/// Mixes a seed with a stream index so derived generators are decorrelated.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seedable 64-bit generator with hand-rolled distributions.
///
/// std::mt19937_64 is bit-exact across platforms but the standard
/// distributions are not, so every draw used by the library goes through
/// the helpers below.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform integer in [0, bound), bound >= 1. Rejection sampling keeps the
  /// draw unbiased and implementation-independent.
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % bound;
  }

  /// k distinct indices from {0, ..., n-1} by partial Fisher-Yates,
  /// in selection order.
  std::vector<std::ptrdiff_t> sample_without_replacement(std::ptrdiff_t n, std::ptrdiff_t k) {
    std::vector<std::ptrdiff_t> pool(static_cast<std::size_t>(n));
    for (std::ptrdiff_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (std::ptrdiff_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::ptrdiff_t>(uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace heatflow
