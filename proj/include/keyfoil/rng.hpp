#ifndef KEYFOIL_RNG_HPP
#define KEYFOIL_RNG_HPP

// Counter-based randomness. Every draw is a pure function of
// (master seed, purpose label, counters), so streams can be rebuilt anywhere
// and in any order with bit-identical results.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace keyfoil {

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t label_hash(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t derive_key(std::uint64_t seed, std::string_view label,
                                          std::initializer_list<std::uint64_t> counters) noexcept {
  std::uint64_t h = mix64(seed ^ label_hash(label));
  for (std::uint64_t c : counters) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

/// Maps 64 random bits to [0, 1) with 53 bits of resolution.
inline constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential stream over a derived key. Cheap to copy; copies replay the same draws.
class Stream {
 public:
  constexpr Stream() = default;
  constexpr explicit Stream(std::uint64_t key) : key_(key) {}
  Stream(std::uint64_t seed, std::string_view label, std::initializer_list<std::uint64_t> counters)
      : key_(derive_key(seed, label, counters)) {}

  constexpr std::uint64_t next_bits() noexcept { return bits_at(key_, counter_++); }

  /// The draw a stream over `key` produces at position `counter`.
  static constexpr std::uint64_t bits_at(std::uint64_t key, std::uint64_t counter) noexcept {
    return mix64(key ^ mix64(counter));
  }
  constexpr double uniform() noexcept { return to_unit(next_bits()); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Multiply-shift reduction; bias is < n / 2^64, irrelevant at our sizes.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_bits()) * n) >> 64);
  }

  /// Standard exponential variate.
  double exponential() noexcept { return -std::log1p(-uniform()); }

  /// Index drawn from a pmf by inverse CDF.
  std::size_t categorical(std::span<const double> pmf) noexcept { return sample_index(pmf, uniform()); }

  static std::size_t sample_index(std::span<const double> pmf, double u) noexcept {
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      if (pmf[i] <= 0.0) continue;
      last_positive = i;
      acc += pmf[i];
      if (u < acc) return i;
    }
    return last_positive;
  }

  /// Flat Dirichlet(1, ..., 1) draw of length k.
  std::vector<double> dirichlet(std::size_t k) {
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& v : w) total += (v = exponential());
    for (auto& v : w) v /= total;
    return w;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace keyfoil

#endif  // KEYFOIL_RNG_HPP
