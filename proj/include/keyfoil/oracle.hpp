#ifndef KEYFOIL_ORACLE_HPP
#define KEYFOIL_ORACLE_HPP

// Exhaustive grid oracle: every conditional pmf whose entries are multiples of
// 1/m is tried, infeasible points are dropped and the best inner-min value is
// returned. Independent of the solver's evaluation code.
//
// For the two-layer programs the search decomposes over u: the message rate
// depends only on p(u,v|x), while the objective and the key rate are sums of
// per-u terms. Each per-u block keeps its Pareto frontier of (key cost, value)
// over the decoder grid, and blocks are combined under the key budget.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "keyfoil/errors.hpp"
#include "keyfoil/instance.hpp"
#include "keyfoil/region.hpp"

namespace keyfoil {

inline constexpr std::size_t kOracleMaxParams = 12;
inline constexpr double kOracleMaxPoints = 1e11;

/// Number of free coordinates in the mode's conditionals.
inline std::size_t oracle_free_parameters(const ProblemInstance& prob, Mode mode, std::size_t card_u,
                                          std::size_t card_v) {
  std::size_t nx = prob.nx(), ny = prob.ny();
  switch (mode) {
    case Mode::thm1:
    case Mode::thm2: return nx * (card_u * card_v - 1) + card_u * card_v * (ny - 1);
    case Mode::thm3: return nx * (ny * card_u - 1);
    case Mode::thm4: return nx * (ny - 1);
    case Mode::lossless: return nx * (card_u - 1);
  }
  return 0;
}

namespace detail {

using Composition = std::vector<std::uint8_t>;

/// All ways to write m as an ordered sum of k nonnegative integers.
inline std::vector<Composition> compositions(int m, std::size_t k) {
  std::vector<Composition> out;
  Composition c(k, 0);
  auto rec = [&](auto&& self, std::size_t i, int left) -> void {
    if (i + 1 == k) {
      c[i] = static_cast<std::uint8_t>(left);
      out.push_back(c);
      return;
    }
    for (int a = 0; a <= left; ++a) {
      c[i] = static_cast<std::uint8_t>(a);
      self(self, i + 1, left - a);
    }
  };
  rec(rec, 0, m);
  return out;
}

inline double binom(double n, double k) {
  double r = 1.0;
  for (double i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double neg_xlog2x(double q) { return q > 0.0 ? -q * std::log2(q) : 0.0; }

/// Entropy of the marginal over `mask` (bit d = axis d) of a dense 4-axis table.
inline double masked_entropy(const std::vector<double>& q, const std::array<std::size_t, 4>& n, unsigned mask,
                             std::vector<double>& scratch) {
  std::size_t size = 1;
  for (int d = 0; d < 4; ++d)
    if (mask & (1u << d)) size *= n[d];
  scratch.assign(size, 0.0);
  std::size_t flat = 0;
  for (std::size_t a = 0; a < n[0]; ++a)
    for (std::size_t b = 0; b < n[1]; ++b)
      for (std::size_t c = 0; c < n[2]; ++c)
        for (std::size_t d = 0; d < n[3]; ++d, ++flat) {
          const std::array<std::size_t, 4> co{a, b, c, d};
          std::size_t idx = 0;
          for (int k = 0; k < 4; ++k)
            if (mask & (1u << k)) idx = idx * n[k] + co[k];
          scratch[idx] += q[flat];
        }
  double h = 0.0;
  for (double p : scratch) h += neg_xlog2x(p);
  return h;
}

struct FrontierPoint {
  double cost;
  double value;
};

/// Keeps points not dominated in (lower cost, higher value).
inline std::vector<FrontierPoint> pareto(std::vector<FrontierPoint> pts, double budget) {
  std::erase_if(pts, [&](const FrontierPoint& p) { return p.cost > budget; });
  std::sort(pts.begin(), pts.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
    return a.cost < b.cost || (a.cost == b.cost && a.value > b.value);
  });
  std::vector<FrontierPoint> out;
  for (const auto& p : pts)
    if (out.empty() || p.value > out.back().value) out.push_back(p);
  return out;
}

inline double best_under_budget(const std::vector<FrontierPoint>& a, const std::vector<FrontierPoint>& b,
                                double budget) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t j = b.size();
  for (const auto& p : a) {
    while (j > 0 && p.cost + b[j - 1].cost > budget) --j;
    if (j == 0) break;
    best = std::max(best, p.value + b[j - 1].value);
  }
  return best;
}

class TwoLayerOracle {
 public:
  TwoLayerOracle(const ProblemInstance& prob, Mode mode, std::size_t nu, std::size_t nv, int m)
      : prob_(prob), mode_(mode), nu_(nu), nv_(nv), m_(m), nx_(prob.nx()), ny_(prob.ny()),
        ycomps_(compositions(m, prob.ny())), klogk_(static_cast<std::size_t>(m) * m + 1, 0.0) {
    for (std::size_t k = 1; k < klogk_.size(); ++k) klogk_[k] = static_cast<double>(k) * std::log2(static_cast<double>(k));
    double digits = std::pow(m + 1.0, static_cast<double>(nx_ * nv_));
    if (digits <= 4.2e6) dense_.resize(static_cast<std::size_t>(digits));
  }

  double run() {
    const double key_budget = prob_.r0 + 1e-9;
    const double msg_budget = prob_.r + 1e-9;
    const double mm = m_;
    auto rows = compositions(m_, nu_ * nv_);
    std::vector<std::size_t> pick(nx_, 0);
    double hx = 0.0;
    std::vector<double> xlog(nx_);
    for (std::size_t x = 0; x < nx_; ++x) {
      hx += neg_xlog2x(prob_.p0[x]);
      xlog[x] = prob_.p0[x] > 0.0 ? std::log2(prob_.p0[x] / mm) : 0.0;
    }

    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> puv(nu_ * nv_);
    std::vector<const std::vector<FrontierPoint>*> fronts(nu_);
    while (true) {
      // I(X;U,V) = H(X) + H(UV) - H(XUV)
      std::fill(puv.begin(), puv.end(), 0.0);
      double hxuv = 0.0;
      for (std::size_t x = 0; x < nx_; ++x) {
        double px = prob_.p0[x];
        if (px == 0.0) continue;
        for (std::size_t w = 0; w < nu_ * nv_; ++w) {
          unsigned a = rows[pick[x]][w];
          puv[w] += px * a / mm;
          hxuv -= px / mm * (klogk_[a] + a * xlog[x]);
        }
      }
      double huv = 0.0;
      for (double q : puv) huv += neg_xlog2x(q);
      if (hx + huv - hxuv <= msg_budget) {
        double ceiling = 0.0;
        for (std::size_t u = 0; u < nu_; ++u) {
          std::uint64_t code = 0;
          for (std::size_t x = 0; x < nx_; ++x)
            for (std::size_t v = 0; v < nv_; ++v) code = code * (m_ + 1) + rows[pick[x]][u * nv_ + v];
          fronts[u] = &frontier(code, key_budget);
          ceiling += fronts[u]->empty() ? -std::numeric_limits<double>::infinity() : fronts[u]->back().value;
        }
        if (ceiling > best) best = std::max(best, combine(fronts, key_budget));
      }
      std::size_t x = 0;
      while (x < nx_ && ++pick[x] == rows.size()) pick[x++] = 0;
      if (x == nx_) break;
    }
    return best;
  }

 private:
  const std::vector<FrontierPoint>& frontier(std::uint64_t code, double budget) {
    if (!dense_.empty()) {
      auto& slot = dense_[code];
      if (!slot) slot = block_frontier(code, budget);
      return *slot;
    }
    auto it = cache_.find(code);
    if (it == cache_.end()) it = cache_.emplace(code, block_frontier(code, budget)).first;
    return it->second;
  }

  // Frontier of (p(u) * key-rate contribution, value contribution) for one u.
  // thm1 cost: H(XY,u) + H(V,u) - H(XYV,u) - H(u); thm2 uses Y in place of XY.
  std::vector<FrontierPoint> block_frontier(std::uint64_t code, double budget) const {
    std::vector<unsigned> a(nx_ * nv_);
    for (std::size_t k = a.size(); k-- > 0;) {
      a[k] = static_cast<unsigned>(code % (m_ + 1));
      code /= (m_ + 1);
    }
    const double mm = static_cast<double>(m_) * m_;
    std::vector<double> pv(nv_, 0.0), xlog(nx_, 0.0);
    for (std::size_t x = 0; x < nx_; ++x) {
      if (prob_.p0[x] > 0.0) xlog[x] = std::log2(prob_.p0[x] / mm);
      for (std::size_t v = 0; v < nv_; ++v) pv[v] += prob_.p0[x] * a[x * nv_ + v] / m_;
    }
    double h_v = 0.0, pu = 0.0;
    for (double c : pv) {
      h_v += neg_xlog2x(c);
      pu += c;
    }
    const double base = h_v - neg_xlog2x(pu);
    std::vector<double> vlog(nv_, 0.0);
    for (std::size_t v = 0; v < nv_; ++v)
      if (pv[v] > 0.0) vlog[v] = std::log2(pv[v] / m_);

    if (pu == 0.0) return {{0.0, 0.0}};

    // Parts of the cost and value that split over v; only H(XY,u) (thm1) or
    // H(Y,u) (thm2) couples the decoder rows.
    const std::size_t nj = ycomps_.size(), nz = prob_.nz();
    std::vector<double> sep_cost(nv_ * nj, 0.0), sep_val(nv_ * nj * nz, 0.0);
    for (std::size_t v = 0; v < nv_; ++v)
      for (std::size_t j = 0; j < nj; ++j)
        for (std::size_t y = 0; y < ny_; ++y) {
          unsigned b = ycomps_[j][y];
          if (mode_ == Mode::thm2 && pv[v] > 0.0) sep_cost[v * nj + j] += pv[v] / m_ * (klogk_[b] + b * vlog[v]);
          for (std::size_t x = 0; x < nx_; ++x) {
            double px = prob_.p0[x];
            unsigned c = a[x * nv_ + v] * b;
            if (px == 0.0 || c == 0) continue;
            if (mode_ == Mode::thm1) sep_cost[v * nj + j] += px / mm * (klogk_[c] + c * xlog[x]);
            for (std::size_t z = 0; z < nz; ++z) sep_val[(v * nj + j) * nz + z] += px * c / mm * prob_.pi(x, y, z);
          }
        }

    std::vector<FrontierPoint> pts;
    pts.reserve(static_cast<std::size_t>(std::pow(static_cast<double>(nj), static_cast<double>(nv_))));
    std::vector<std::size_t> yp(nv_, 0);
    std::vector<double> sz(nz);
    while (true) {
      double cost = base;
      std::fill(sz.begin(), sz.end(), 0.0);
      for (std::size_t v = 0; v < nv_; ++v) {
        cost += sep_cost[v * nj + yp[v]];
        const double* t = &sep_val[(v * nj + yp[v]) * nz];
        for (std::size_t z = 0; z < nz; ++z) sz[z] += t[z];
      }
      if (mode_ == Mode::thm1) {
        for (std::size_t x = 0; x < nx_; ++x) {
          double px = prob_.p0[x];
          if (px == 0.0) continue;
          for (std::size_t y = 0; y < ny_; ++y) {
            unsigned k = 0;
            for (std::size_t v = 0; v < nv_; ++v) k += a[x * nv_ + v] * ycomps_[yp[v]][y];
            cost -= px / mm * (klogk_[k] + k * xlog[x]);
          }
        }
      } else {
        for (std::size_t y = 0; y < ny_; ++y) {
          double sy = 0.0;
          for (std::size_t v = 0; v < nv_; ++v) sy += pv[v] * ycomps_[yp[v]][y] / m_;
          cost += neg_xlog2x(sy);
        }
      }
      pts.push_back({cost, *std::min_element(sz.begin(), sz.end())});
      std::size_t v = 0;
      while (v < nv_ && ++yp[v] == nj) yp[v++] = 0;
      if (v == nv_) break;
    }
    return pareto(std::move(pts), budget);
  }

  static double combine(const std::vector<const std::vector<FrontierPoint>*>& fronts, double budget) {
    if (fronts.size() == 1) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& p : *fronts[0]) best = std::max(best, p.value);
      return best;
    }
    std::vector<FrontierPoint> acc = *fronts[0];
    for (std::size_t u = 1; u + 1 < fronts.size(); ++u) {
      std::vector<FrontierPoint> next;
      for (const auto& a : acc)
        for (const auto& b : *fronts[u]) next.push_back({a.cost + b.cost, a.value + b.value});
      acc = pareto(std::move(next), budget);
    }
    return best_under_budget(acc, *fronts.back(), budget);
  }

  const ProblemInstance& prob_;
  Mode mode_;
  std::size_t nu_, nv_;
  int m_;
  std::size_t nx_, ny_;
  std::vector<Composition> ycomps_;
  std::vector<double> klogk_;
  std::vector<std::optional<std::vector<FrontierPoint>>> dense_;
  std::unordered_map<std::uint64_t, std::vector<FrontierPoint>> cache_;
};

/// Direct enumeration for the single-layer programs (thm3, thm4, lossless).
inline double single_layer_oracle(const ProblemInstance& prob, Mode mode, std::size_t nu, int m,
                                  Thm3Constraint thm3) {
  const std::size_t nx = prob.nx(), ny = prob.ny();
  const std::size_t row = mode == Mode::thm3 ? ny * nu : mode == Mode::thm4 ? ny : nu;
  auto rows = compositions(m, row);
  // Cell layout (X, Y, U, 1).
  const std::array<std::size_t, 4> dims{nx, ny, mode == Mode::thm4 ? std::size_t{1} : nu, 1};
  std::vector<double> q(nx * ny * dims[2]), scratch;
  std::vector<std::size_t> pick(nx, 0);
  auto H = [&](unsigned mask) { return masked_entropy(q, dims, mask, scratch); };
  const double key_budget = prob.r0 + 1e-9, msg_budget = prob.r + 1e-9;
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      const auto& c = rows[pick[x]];
      for (std::size_t k = 0; k < row; ++k) {
        double w = prob.p0[x] * c[k] / m;
        switch (mode) {
          case Mode::thm3: q[(x * ny + k / nu) * nu + k % nu] = w; break;
          case Mode::thm4: q[x * ny + k] = w; break;
          default: q[(x * ny + x) * nu + k] = w; break;
        }
      }
    }
    bool ok = true;
    switch (mode) {
      case Mode::thm3: {
        double hx = H(1), hu = H(4), hxu = H(5), hyu = H(6), hxyu = H(7);
        double msg = hx + hyu - hxyu;
        double keyr = thm3 == Thm3Constraint::IXYgU ? hxu + hyu - hxyu - hu : H(3) + hu - hxyu;
        ok = msg <= msg_budget && keyr <= key_budget;
        break;
      }
      case Mode::thm4: ok = H(1) + H(2) - H(3) <= msg_budget; break;
      default: ok = H(5) - H(4) <= key_budget; break;
    }
    if (ok) {
      double value = 0.0;
      for (std::size_t u = 0; u < dims[2]; ++u) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t z = 0; z < prob.nz(); ++z) {
          double s = 0.0;
          for (std::size_t x = 0; x < nx; ++x)
            for (std::size_t y = 0; y < ny; ++y) s += q[(x * ny + y) * dims[2] + u] * prob.pi(x, y, z);
          lo = std::min(lo, s);
        }
        value += lo;
      }
      best = std::max(best, value);
    }
    std::size_t x = 0;
    while (x < nx && ++pick[x] == rows.size()) pick[x++] = 0;
    if (x == nx) break;
  }
  return best;
}

}  // namespace detail

/// Best value over the 1/m simplex grid. Throws GuardError when the search
/// exceeds 12 free parameters or about 1e11 grid points.
inline double oracle_grid(const ProblemInstance& prob, Mode mode, std::size_t card_u, std::size_t card_v, int m,
                          Thm3Constraint thm3 = Thm3Constraint::IXYgU) {
  prob.validate();
  if (m < 1 || m > 255) throw ArgumentError("oracle resolution must be 1/m with 1 <= m <= 255");
  if (card_u < 1 || card_v < 1) throw ArgumentError("cardinalities must be at least 1");
  if (mode == Mode::thm4 && !(prob.r0 > 0.0))
    throw InfeasibleError("message-only adversary requires R0 > 0 (discontinuity at R0 = 0)");
  if (mode == Mode::lossless) {
    if (prob.nx() != prob.ny()) throw ArgumentError("lossless mode needs |Y| = |X|");
    if (prob.r < prob.source_entropy() - kNormTol) throw InfeasibleError("lossless reproduction needs R >= H(X)");
  }
  if (mode == Mode::thm4) card_u = card_v = 1;
  if (mode == Mode::thm3 || mode == Mode::lossless) card_v = 1;

  std::size_t params = oracle_free_parameters(prob, mode, card_u, card_v);
  if (params > kOracleMaxParams)
    throw GuardError("oracle refused: " + std::to_string(params) + " free parameters exceed the limit of " +
                     std::to_string(kOracleMaxParams));
  std::size_t row = 0;
  switch (mode) {
    case Mode::thm1:
    case Mode::thm2: row = card_u * card_v; break;
    case Mode::thm3: row = prob.ny() * card_u; break;
    case Mode::thm4: row = prob.ny(); break;
    case Mode::lossless: row = card_u; break;
  }
  double points = std::pow(detail::binom(m + row - 1.0, row - 1.0), static_cast<double>(prob.nx()));
  if (points > kOracleMaxPoints)
    throw GuardError("oracle refused: about " + std::to_string(points) + " grid points at resolution 1/" +
                     std::to_string(m));

  if (mode == Mode::thm1 || mode == Mode::thm2)
    return detail::TwoLayerOracle(prob, mode, card_u, card_v, m).run();
  return detail::single_layer_oracle(prob, mode, card_u, m, thm3);
}

}  // namespace keyfoil

#endif  // KEYFOIL_ORACLE_HPP
