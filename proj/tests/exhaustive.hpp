#ifndef KEYFOIL_TESTS_EXHAUSTIVE_HPP
#define KEYFOIL_TESTS_EXHAUSTIVE_HPP

// Exact game values at tiny blocklengths by enumerating every
// (key, source word, action word) outcome.

#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "keyfoil/adversim.hpp"
#include "keyfoil/coordcode.hpp"

namespace keyfoil::testing {

struct Outcome {
  double prob;
  std::uint64_t k, j1, j2;
  std::vector<Symbol> x, y;
};

inline std::vector<Outcome> enumerate_outcomes(const Codebook& cb, std::span<const double> source) {
  const std::size_t n = cb.n(), nx = cb.nx(), ny = cb.ny();
  std::vector<Outcome> out;
  std::uint64_t xwords = 1, ywords = 1;
  for (std::size_t i = 0; i < n; ++i) {
    xwords *= nx;
    ywords *= ny;
  }
  const double pk = 1.0 / static_cast<double>(cb.key_count());
  for (std::uint64_t k = 0; k < cb.key_count(); ++k)
    for (std::uint64_t xi = 0; xi < xwords; ++xi) {
      std::vector<Symbol> x(n);
      double px = pk;
      for (std::size_t i = n, c = xi; i-- > 0; c /= nx) {
        x[i] = static_cast<Symbol>(c % nx);
        px *= source[x[i]];
      }
      if (px == 0.0) continue;
      Encoding e = encode(x, k, cb);
      for (std::uint64_t yi = 0; yi < ywords; ++yi) {
        std::vector<Symbol> y(n);
        double p = px;
        for (std::size_t i = n, c = yi; i-- > 0; c /= ny) {
          y[i] = static_cast<Symbol>(c % ny);
          p *= cb.y_given_uv(cb.u_symbol(e.j1, i), cb.v_symbol(e.j1, e.j2, k, i))[y[i]];
        }
        if (p > 0.0) out.push_back({p, k, e.j1, e.j2, x, y});
      }
    }
  return out;
}

/// Expected total payoff sum_i pi(x_i, y_i, z_i) of a strategy.
inline double strategy_value(const std::vector<Outcome>& outs, const Strategy& s, AdversaryModel model,
                             const PayoffTensor& pi) {
  double total = 0.0;
  for (const auto& o : outs) {
    std::vector<Symbol> z;
    for (std::size_t i = 0; i < o.x.size(); ++i) {
      Symbol zi = s(make_view(model, o.j1, o.j2, o.x, o.y, z));
      total += o.prob * pi(o.x[i], o.y[i], zi);
      z.push_back(zi);
    }
  }
  return total;
}

struct ExhaustiveResult {
  double value;
  bool literal;  // every strategy was evaluated one by one
  std::size_t information_sets;
};

/// Minimum over all deterministic adversary strategies. Against a fixed
/// scheme, the past actions z^{i-1} are a function of the strategy and the
/// visible past, so strategies are exactly maps from (i, j, visible past) to
/// z. With at most `literal_limit` such maps each one is scored; otherwise
/// the minimum is taken per information set, which is the same number.
inline ExhaustiveResult exhaustive_min(const std::vector<Outcome>& outs, AdversaryModel model, const PayoffTensor& pi,
                                       std::uint64_t literal_limit = std::uint64_t{1} << 20) {
  using Key = std::tuple<std::size_t, std::uint64_t, std::uint64_t, std::vector<Symbol>, std::vector<Symbol>>;
  std::map<Key, std::size_t> sets;
  std::vector<std::vector<double>> w;  // per information set, per action
  const std::size_t nz = pi.nz();
  for (const auto& o : outs)
    for (std::size_t i = 0; i < o.x.size(); ++i) {
      std::vector<Symbol> xs, ys;
      if (sees_source(model)) xs.assign(o.x.begin(), o.x.begin() + static_cast<std::ptrdiff_t>(i));
      if (sees_actions(model)) ys.assign(o.y.begin(), o.y.begin() + static_cast<std::ptrdiff_t>(i));
      auto [it, fresh] = sets.try_emplace(Key{i, o.j1, o.j2, xs, ys}, w.size());
      if (fresh) w.emplace_back(nz, 0.0);
      for (std::size_t z = 0; z < nz; ++z) w[it->second][z] += o.prob * pi(o.x[i], o.y[i], z);
    }
  ExhaustiveResult r{0.0, false, w.size()};
  double count = 1.0;
  for (std::size_t s = 0; s < w.size(); ++s) count *= static_cast<double>(nz);
  if (count <= static_cast<double>(literal_limit)) {
    r.literal = true;
    std::vector<std::size_t> pick(w.size(), 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
      double v = 0.0;
      for (std::size_t s = 0; s < w.size(); ++s) v += w[s][pick[s]];
      best = std::min(best, v);
      std::size_t s = 0;
      while (s < pick.size() && ++pick[s] == nz) pick[s++] = 0;
      if (s == pick.size()) break;
    }
    r.value = best;
  } else {
    for (const auto& row : w) r.value += *std::min_element(row.begin(), row.end());
  }
  return r;
}

}  // namespace keyfoil::testing

#endif  // KEYFOIL_TESTS_EXHAUSTIVE_HPP
