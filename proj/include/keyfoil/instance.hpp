#ifndef KEYFOIL_INSTANCE_HPP
#define KEYFOIL_INSTANCE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "keyfoil/errors.hpp"
#include "keyfoil/probcore.hpp"
#include "keyfoil/rng.hpp"

namespace keyfoil {

/// Alphabets, source law, payoff and the (key, message) rate pair in bits/symbol.
struct ProblemInstance {
  std::vector<double> p0;
  PayoffTensor pi;
  double r0 = 0.0;
  double r = 0.0;

  std::size_t nx() const noexcept { return pi.nx(); }
  std::size_t ny() const noexcept { return pi.ny(); }
  std::size_t nz() const noexcept { return pi.nz(); }

  void validate() const {
    if (p0.size() != pi.nx()) throw ArgumentError("source length differs from |X|");
    double total = 0.0;
    for (double p : p0) {
      if (!(p >= 0.0)) throw NormalizationError("source has a negative or non-finite entry");
      total += p;
    }
    if (std::abs(total - 1.0) > kNormTol) throw NormalizationError("source does not sum to 1");
    if (!std::isfinite(r0) || !std::isfinite(r) || r0 < 0.0 || r < 0.0)
      throw ArgumentError("rates must be finite and nonnegative");
  }

  ProblemInstance with_rates(double key_rate, double msg_rate) const {
    ProblemInstance p = *this;
    p.r0 = key_rate;
    p.r = msg_rate;
    return p;
  }

  double source_entropy() const {
    double h = 0.0;
    for (double p : p0) h -= xlog2x(p);
    return h;
  }
};

/// Uniform binary source with pi(x, y, z) = 1{y = x} + 1{z != x}: the receiver
/// scores by copying the source, the eavesdropper by guessing it.
inline ProblemInstance matching_pennies(double r0 = 0.0, double r = 0.0) {
  std::vector<double> v(8);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) v[(x * 2 + y) * 2 + z] = (y == x ? 1.0 : 0.0) + (z != x ? 1.0 : 0.0);
  return ProblemInstance{{0.5, 0.5}, PayoffTensor(2, 2, 2, std::move(v)), r0, r};
}

inline ProblemInstance constant_payoff_instance(double c, std::size_t nx, std::size_t ny, std::size_t nz,
                                                double r0 = 0.0, double r = 0.0) {
  return ProblemInstance{std::vector<double>(nx, 1.0 / static_cast<double>(nx)),
                         PayoffTensor(nx, ny, nz, std::vector<double>(nx * ny * nz, c)), r0, r};
}

/// Seeded random instance: flat-Dirichlet source, payoffs uniform on [0, 1).
inline ProblemInstance random_instance(std::uint64_t seed, std::size_t nx = 2, std::size_t ny = 2,
                                       std::size_t nz = 2, double r0 = 0.0, double r = 0.0) {
  Stream s(seed, "instance", {nx, ny, nz});
  std::vector<double> p0 = s.dirichlet(nx);
  std::vector<double> v(nx * ny * nz);
  for (auto& e : v) e = s.uniform();
  return ProblemInstance{std::move(p0), PayoffTensor(nx, ny, nz, std::move(v)), r0, r};
}

}  // namespace keyfoil

#endif  // KEYFOIL_INSTANCE_HPP
