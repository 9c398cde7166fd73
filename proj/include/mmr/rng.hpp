#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace mmr {

// Counter-based generator: the n-th draw of stream s under seed k is
// splitmix64(k ^ mix(s) + n * golden). Streams are cheap to derive, so every
// consumer (dataset row, training epoch, attack call, matrix cell) gets its
// own stream and results never depend on call interleaving.
class CounterRng {
 public:
  static constexpr std::string_view kName = "splitmix64-ctr";

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(seed ^ mix(stream + 0x632BE59BD9B4E019ull)) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Child stream; deterministic in (parent key, tag) and independent of how
  // many values the parent has produced.
  CounterRng derive(std::uint64_t tag) const noexcept {
    CounterRng child(0, 0);
    child.key_ = mix(key_ ^ mix(tag * 0xD1342543DE82EF95ull + 1));
    return child;
  }

  std::uint64_t next_u64() noexcept {
    return mix(key_ + 0x9E3779B97F4A7C15ull * ++counter_);
  }

  // Uniform in [0, 1) with 53 bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Uniform integer in [0, n); n > 0. Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mmr
