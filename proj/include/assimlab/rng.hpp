#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace assimlab {

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Derive an independent seed from a parent seed, a purpose label and an index.
/// Adding new labels or indices never shifts existing streams.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                    std::uint64_t index = 0) noexcept {
  std::uint64_t h = detail::mix64(parent ^ 0x6a09e667f3bcc909ULL);
  h = detail::mix64(h ^ detail::fnv1a(label));
  return detail::mix64(h ^ (index * 0x9e3779b97f4a7c15ULL + 0x3c6ef372fe94f82bULL));
}

/// Counter-based generator: output i of stream `key` is mix64(key, i).
/// Results are platform independent, unlike the std distributions.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(detail::mix64(key)) {}

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, bound) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
    std::uint64_t r;
    do r = next_u64();
    while (r >= limit);
    return r % bound;
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do u1 = uniform();
    while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace assimlab
