#ifndef KEYFOIL_REGION_HPP
#define KEYFOIL_REGION_HPP

// Optimal secrecy payoff Pi(R0, R) as a max-min program over conditional pmfs.
//
// Every adversary-information model is one instance of the same program:
//
//   maximize   sum_u min_z sum_{x,y,v} p(x,y,u,v) pi(x,y,z)
//   subject to a message-rate and (usually) a key-rate constraint,
//
// differing only in which conditionals are free and which information
// quantities bound the rates:
//
//   mode       free conditionals            message         key
//   thm1       p(u,v|x), p(y|u,v)           I(X;U,V) <= R   I(X,Y;V|U) <= R0
//   thm2       p(u,v|x), p(y|u,v)           I(X;U,V) <= R   I(Y;V|U)   <= R0
//   thm3       p(y,u|x)                     I(X;U,Y) <= R   I(X;Y|U)   <= R0  (switchable)
//   thm4       p(y|x)                       I(X;Y)   <= R   R0 > 0
//   lossless   p(u|x), Y = X                H(X)     <= R   H(X|U)     <= R0
//
// The outer problem is non-concave, so it is attacked with multi-start
// projected gradient ascent on the product of simplices, an escalating exact
// penalty on rate violations, and smoothing of the inner min and penalty kinks
// that anneals to zero. The best feasible iterate over all starts is returned;
// values are lower estimates at the chosen cardinalities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keyfoil/errors.hpp"
#include "keyfoil/instance.hpp"
#include "keyfoil/parallel.hpp"
#include "keyfoil/probcore.hpp"
#include "keyfoil/rng.hpp"

namespace keyfoil {

enum class Mode { thm1, thm2, thm3, thm4, lossless };

/// What the eavesdropper sees besides the public message.
enum class AdversaryModel { FullCausal, PastActionsOnly, PastSourceOnly, MessageOnly };

inline constexpr Mode mode_for(AdversaryModel m) noexcept {
  switch (m) {
    case AdversaryModel::FullCausal: return Mode::thm1;
    case AdversaryModel::PastActionsOnly: return Mode::thm2;
    case AdversaryModel::PastSourceOnly: return Mode::thm3;
    case AdversaryModel::MessageOnly: return Mode::thm4;
  }
  return Mode::thm1;
}

inline constexpr std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::thm1: return "thm1";
    case Mode::thm2: return "thm2";
    case Mode::thm3: return "thm3";
    case Mode::thm4: return "thm4";
    case Mode::lossless: return "lossless";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::thm1, Mode::thm2, Mode::thm3, Mode::thm4, Mode::lossless})
    if (to_string(m) == s) return m;
  throw ArgumentError("unknown mode '" + std::string(s) + "'");
}

/// Two readings of the past-source-only key bound: I(X;Y|U) or I(X,Y;U).
enum class Thm3Constraint { IXYgU, IXandYjointU };

inline constexpr std::string_view to_string(Thm3Constraint c) noexcept {
  return c == Thm3Constraint::IXYgU ? "IXYgU" : "IXandYjointU";
}

inline Thm3Constraint parse_thm3_constraint(std::string_view s) {
  if (s == "IXYgU") return Thm3Constraint::IXYgU;
  if (s == "IXandYjointU") return Thm3Constraint::IXandYjointU;
  throw ArgumentError("unknown thm3_constraint '" + std::string(s) + "'");
}

enum class SolveStatus { converged, max_iters, infeasible_cardinality, infeasible };

inline constexpr std::string_view to_string(SolveStatus s) noexcept {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max-iters";
    case SolveStatus::infeasible_cardinality: return "infeasible-cardinality";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

enum class GradientMethod { analytic, finite_difference };

struct SolverConfig {
  std::uint64_t seed = 1;
  int restarts = 64;
  int penalty_rounds = 8;
  double penalty_initial = 0.3;
  double penalty_growth = 4.0;
  int max_iters_per_round = 400;
  int stall_window = 50;
  double stall_tol = 1e-7;
  double initial_step = 0.1;
  /// Width of the smoothing applied to the inner min (relative to the payoff
  /// range) and to the penalty hinge (in bits); quartered every round.
  double smoothing = 0.01;
  double feas_tol = 1e-9;
  GradientMethod gradient = GradientMethod::analytic;
  double fd_step = 1e-5;
  Thm3Constraint thm3_constraint = Thm3Constraint::IXYgU;
  /// Extra starting points. Each is projected onto the mode's free
  /// conditionals; incompatible shapes are skipped.
  std::vector<JointDist> warm_starts;
};

struct SolveResult {
  Mode mode = Mode::thm1;
  double value = std::numeric_limits<double>::quiet_NaN();
  JointDist joint;
  std::vector<int> zmap;
  double key_rate_used = 0.0;
  double msg_rate_used = 0.0;
  int restarts_run = 0;
  SolveStatus status = SolveStatus::infeasible_cardinality;
  std::size_t card_u = 1;
  std::size_t card_v = 1;
};

struct BestResponse {
  std::vector<int> zmap;
  double value = 0.0;
};

/// Adversary's optimal single-letter map z(u) against p(x, y, u); ties go to
/// the smallest z, unobserved u map to 0.
inline BestResponse inner_best_response(const JointDist& joint_xyu, const PayoffTensor& pi) {
  JointDist m = joint_xyu.marginal({"U", "X", "Y"});
  std::size_t nu = m.axes()[0].size, nx = m.axes()[1].size, ny = m.axes()[2].size;
  if (nx != pi.nx() || ny != pi.ny()) throw ArgumentError("joint and payoff alphabets differ");
  BestResponse br;
  br.zmap.assign(nu, 0);
  auto mass = m.mass();
  for (std::size_t u = 0; u < nu; ++u) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t z = 0; z < pi.nz(); ++z) {
      double s = 0.0;
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) s += mass[(u * nx + x) * ny + y] * pi(x, y, z);
      if (s < best) {
        best = s;
        br.zmap[u] = static_cast<int>(z);
      }
    }
    br.value += best;
  }
  return br;
}

inline std::size_t default_cardinality(const ProblemInstance& prob) { return prob.nx() * prob.ny() + 2; }

/// Same joint with axis `name` widened to `size`; new letters carry no mass.
inline JointDist pad_axis(const JointDist& d, std::string_view name, std::size_t size) {
  std::size_t k = d.axis_index(name);
  const auto& axes = d.axes();
  if (size < axes[k].size) throw ArgumentError("pad_axis cannot shrink an axis");
  std::size_t inner = 1;
  for (std::size_t i = k + 1; i < axes.size(); ++i) inner *= axes[i].size;
  std::size_t old_size = axes[k].size, outer = d.cells() / (old_size * inner);
  std::vector<double> mass(outer * size * inner, 0.0);
  auto src = d.mass();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < old_size; ++a)
      for (std::size_t i = 0; i < inner; ++i) mass[(o * size + a) * inner + i] = src[(o * old_size + a) * inner + i];
  std::vector<Axis> out = axes;
  out[k].size = size;
  return JointDist(std::move(out), std::move(mass));
}

namespace detail {

enum : unsigned { kX = 1u, kY = 2u, kU = 4u, kV = 8u };

struct EntropyTerm {
  unsigned mask;
  double coef;
};

/// sum(coef * H(mask)) <= bound
struct RateConstraint {
  std::vector<EntropyTerm> terms;
  double bound;
};

inline std::vector<EntropyTerm> mi_terms(unsigned a, unsigned b, unsigned c) {
  std::vector<EntropyTerm> t{{a | c, 1.0}, {b | c, 1.0}, {a | b | c, -1.0}};
  if (c != 0) t.push_back({c, -1.0});
  return t;
}

inline void project_to_simplex(std::span<double> v) {
  std::size_t k = v.size();
  if (k == 1) {
    v[0] = 1.0;
    return;
  }
  std::array<double, 64> small{};
  std::vector<double> large;
  std::span<double> s;
  if (k <= small.size()) {
    s = std::span<double>(small.data(), k);
  } else {
    large.resize(k);
    s = large;
  }
  std::copy(v.begin(), v.end(), s.begin());
  std::sort(s.begin(), s.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    cumsum += s[i];
    double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (s[i] - t > 0.0) theta = t;
  }
  double total = 0.0;
  for (auto& x : v) total += (x = std::max(0.0, x - theta));
  for (auto& x : v) x /= total;
}

/// Layout of one mode's free conditionals and the induced joint p(x, y, u, v).
class Program {
 public:
  struct Block {
    std::size_t offset, size;
  };

  Program(const ProblemInstance& prob, Mode mode, std::size_t nu, std::size_t nv, Thm3Constraint thm3)
      : mode_(mode), p0_(prob.p0), pi_(prob.pi), nx_(prob.nx()), ny_(prob.ny()), nz_(prob.nz()) {
    if (nu < 1 || nv < 1) throw ArgumentError("cardinalities must be at least 1");
    switch (mode) {
      case Mode::thm1:
      case Mode::thm2:
        nu_ = nu;
        nv_ = nv;
        add_blocks(nx_, nu_ * nv_);
        add_blocks(nu_ * nv_, ny_);
        constraints_.push_back({mi_terms(kX, kU | kV, 0), prob.r});
        constraints_.push_back(mode == Mode::thm1 ? RateConstraint{mi_terms(kX | kY, kV, kU), prob.r0}
                                                  : RateConstraint{mi_terms(kY, kV, kU), prob.r0});
        break;
      case Mode::thm3:
        nu_ = nu;
        add_blocks(nx_, ny_ * nu_);
        constraints_.push_back({mi_terms(kX, kU | kY, 0), prob.r});
        constraints_.push_back(thm3 == Thm3Constraint::IXYgU ? RateConstraint{mi_terms(kX, kY, kU), prob.r0}
                                                             : RateConstraint{mi_terms(kX | kY, kU, 0), prob.r0});
        break;
      case Mode::thm4:
        add_blocks(nx_, ny_);
        constraints_.push_back({mi_terms(kX, kY, 0), prob.r});
        break;
      case Mode::lossless:
        if (ny_ != nx_) throw ArgumentError("lossless mode needs |Y| = |X|");
        nu_ = nu;
        add_blocks(nx_, nu_);
        constraints_.push_back({{{kX | kU, 1.0}, {kU, -1.0}}, prob.r0});
        break;
    }
    cells_ = nx_ * ny_ * nu_ * nv_;
    build_mask_maps();
  }

  Mode mode() const noexcept { return mode_; }
  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nz() const noexcept { return nz_; }
  std::size_t nu() const noexcept { return nu_; }
  std::size_t nv() const noexcept { return nv_; }
  std::size_t cells() const noexcept { return cells_; }
  std::size_t params() const noexcept { return params_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const std::vector<RateConstraint>& constraints() const noexcept { return constraints_; }
  const std::vector<unsigned>& masks() const noexcept { return masks_; }
  const std::vector<std::uint32_t>& mask_map(std::size_t k) const noexcept { return mask_maps_[k]; }
  std::size_t mask_cells(std::size_t k) const noexcept { return mask_cells_[k]; }
  std::size_t mask_slot(unsigned mask) const {
    return static_cast<std::size_t>(std::find(masks_.begin(), masks_.end(), mask) - masks_.begin());
  }
  const PayoffTensor& pi() const noexcept { return pi_; }
  std::span<const double> p0() const noexcept { return p0_; }

  std::size_t cell(std::size_t x, std::size_t y, std::size_t u, std::size_t v) const noexcept {
    return ((x * ny_ + y) * nu_ + u) * nv_ + v;
  }

  void joint(std::span<const double> th, std::span<double> P) const {
    std::fill(P.begin(), P.end(), 0.0);
    switch (mode_) {
      case Mode::thm1:
      case Mode::thm2: {
        std::size_t nuv = nu_ * nv_, boff = nx_ * nuv;
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t w = 0; w < nuv; ++w) {
            double a = p0_[x] * th[x * nuv + w];
            for (std::size_t y = 0; y < ny_; ++y) P[cell(x, y, w / nv_, w % nv_)] = a * th[boff + w * ny_ + y];
          }
        break;
      }
      case Mode::thm3:
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t k = 0; k < ny_ * nu_; ++k) P[cell(x, k / nu_, k % nu_, 0)] = p0_[x] * th[x * ny_ * nu_ + k];
        break;
      case Mode::thm4:
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t y = 0; y < ny_; ++y) P[cell(x, y, 0, 0)] = p0_[x] * th[x * ny_ + y];
        break;
      case Mode::lossless:
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t u = 0; u < nu_; ++u) P[cell(x, x, u, 0)] = p0_[x] * th[x * nu_ + u];
        break;
    }
  }

  /// Chain rule from d/dP to d/dtheta.
  void pullback(std::span<const double> th, std::span<const double> dP, std::span<double> g) const {
    std::fill(g.begin(), g.end(), 0.0);
    switch (mode_) {
      case Mode::thm1:
      case Mode::thm2: {
        std::size_t nuv = nu_ * nv_, boff = nx_ * nuv;
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t w = 0; w < nuv; ++w) {
            double a = p0_[x] * th[x * nuv + w];
            double ga = 0.0;
            for (std::size_t y = 0; y < ny_; ++y) {
              double d = dP[cell(x, y, w / nv_, w % nv_)];
              ga += d * th[boff + w * ny_ + y];
              g[boff + w * ny_ + y] += d * a;
            }
            g[x * nuv + w] = p0_[x] * ga;
          }
        break;
      }
      case Mode::thm3:
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t k = 0; k < ny_ * nu_; ++k) g[x * ny_ * nu_ + k] = p0_[x] * dP[cell(x, k / nu_, k % nu_, 0)];
        break;
      case Mode::thm4:
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t y = 0; y < ny_; ++y) g[x * ny_ + y] = p0_[x] * dP[cell(x, y, 0, 0)];
        break;
      case Mode::lossless:
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t u = 0; u < nu_; ++u) g[x * nu_ + u] = p0_[x] * dP[cell(x, x, u, 0)];
        break;
    }
  }

  JointDist to_joint_dist(std::span<const double> th) const {
    std::vector<double> P(cells_);
    joint(th, P);
    std::vector<Axis> axes{{"X", nx_}, {"Y", ny_}, {"U", nu_}};
    if (mode_ == Mode::thm1 || mode_ == Mode::thm2) axes.push_back({"V", nv_});
    return JointDist(std::move(axes), std::move(P));
  }

  // ---- starting points -------------------------------------------------

  /// Every conditional uniform; independent of X.
  std::vector<double> uniform_start() const {
    std::vector<double> th(params_);
    for (const auto& b : blocks_)
      for (std::size_t i = 0; i < b.size; ++i) th[b.offset + i] = 1.0 / static_cast<double>(b.size);
    return th;
  }

  /// Deterministic maps; `reveal` routes X through the public layer U,
  /// otherwise through the keyed layer V (or Y alone).
  std::vector<double> identity_start(bool reveal) const {
    std::vector<double> th(params_, 0.0);
    switch (mode_) {
      case Mode::thm1:
      case Mode::thm2: {
        std::size_t nuv = nu_ * nv_, boff = nx_ * nuv;
        for (std::size_t x = 0; x < nx_; ++x) {
          std::size_t u = reveal ? x % nu_ : 0, v = reveal ? 0 : x % nv_;
          th[x * nuv + u * nv_ + v] = 1.0;
        }
        for (std::size_t w = 0; w < nuv; ++w) th[boff + w * ny_ + (reveal ? w / nv_ : w % nv_) % ny_] = 1.0;
        break;
      }
      case Mode::thm3:
        for (std::size_t x = 0; x < nx_; ++x) th[x * ny_ * nu_ + (x % ny_) * nu_ + (reveal ? x % nu_ : 0)] = 1.0;
        break;
      case Mode::thm4:
        for (std::size_t x = 0; x < nx_; ++x) th[x * ny_ + x % ny_] = 1.0;
        break;
      case Mode::lossless:
        for (std::size_t x = 0; x < nx_; ++x) th[x * nu_ + (reveal ? x % nu_ : 0)] = 1.0;
        break;
    }
    return th;
  }

  std::vector<double> random_start(Stream& s) const {
    std::vector<double> th(params_);
    int kind = static_cast<int>(s.below(3));
    for (const auto& b : blocks_) {
      auto w = s.dirichlet(b.size);
      if (kind >= 1) {
        // Concentrate near a vertex; optima of this program often sit on faces.
        std::size_t hot = s.below(b.size);
        double keep = kind == 1 ? 0.8 : 0.97;
        for (std::size_t i = 0; i < b.size; ++i) w[i] = (1.0 - keep) * w[i] + (i == hot ? keep : 0.0);
      }
      std::copy(w.begin(), w.end(), th.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    return th;
  }

  /// A point where every rate functional vanishes (or, in lossless mode, the
  /// key functional H(X|U) is as small as the U alphabet allows), built from th.
  std::vector<double> anchor(std::span<const double> th) const {
    std::vector<double> a(th.begin(), th.end());
    switch (mode_) {
      case Mode::thm1:
      case Mode::thm2: {
        std::size_t nuv = nu_ * nv_, boff = nx_ * nuv;
        std::vector<double> avg(nuv, 0.0);
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t w = 0; w < nuv; ++w) avg[w] += p0_[x] * th[x * nuv + w];
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t w = 0; w < nuv; ++w) a[x * nuv + w] = avg[w];
        for (std::size_t u = 0; u < nu_; ++u) {
          double pu = 0.0;
          std::vector<double> py(ny_, 0.0);
          for (std::size_t v = 0; v < nv_; ++v) {
            std::size_t w = u * nv_ + v;
            pu += avg[w];
            for (std::size_t y = 0; y < ny_; ++y) py[y] += avg[w] * th[boff + w * ny_ + y];
          }
          for (std::size_t v = 0; v < nv_; ++v)
            for (std::size_t y = 0; y < ny_; ++y)
              a[boff + (u * nv_ + v) * ny_ + y] = pu > 0.0 ? py[y] / pu : 1.0 / static_cast<double>(ny_);
        }
        break;
      }
      case Mode::thm3: {
        std::vector<double> qy(ny_, 0.0), qu(nu_, 0.0);
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t y = 0; y < ny_; ++y)
            for (std::size_t u = 0; u < nu_; ++u) {
              double m = p0_[x] * th[x * ny_ * nu_ + y * nu_ + u];
              qy[y] += m;
              qu[u] += m;
            }
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t y = 0; y < ny_; ++y)
            for (std::size_t u = 0; u < nu_; ++u) a[x * ny_ * nu_ + y * nu_ + u] = qy[y] * qu[u];
        break;
      }
      case Mode::thm4: {
        std::vector<double> qy(ny_, 0.0);
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t y = 0; y < ny_; ++y) qy[y] += p0_[x] * th[x * ny_ + y];
        for (std::size_t x = 0; x < nx_; ++x)
          for (std::size_t y = 0; y < ny_; ++y) a[x * ny_ + y] = qy[y];
        break;
      }
      case Mode::lossless:
        a = identity_start(true);
        break;
    }
    normalize_blocks(a);
    return a;
  }

  /// Projects a joint onto this mode's free conditionals; nullopt if its axes
  /// do not fit.
  std::optional<std::vector<double>> params_from_joint(const JointDist& given) const {
    auto fits_x = [&](std::string_view name, std::size_t size) {
      return given.has_axis(name) && given.axis_size(name) == size;
    };
    if (!fits_x("X", nx_) || (given.has_axis("Y") && given.axis_size("Y") != ny_)) return std::nullopt;
    // Smaller auxiliary alphabets embed by leaving the extra letters unused.
    JointDist j = given;
    if (j.has_axis("U") && j.axis_size("U") < nu_) j = pad_axis(j, "U", nu_);
    if (j.has_axis("V") && j.axis_size("V") < nv_) j = pad_axis(j, "V", nv_);
    auto fits = [&](std::string_view name, std::size_t size) { return j.has_axis(name) && j.axis_size(name) == size; };
    std::vector<double> th(params_);
    auto put = [&](const Conditional& c, std::size_t offset) {
      std::copy(c.table.begin(), c.table.end(), th.begin() + static_cast<std::ptrdiff_t>(offset));
    };
    switch (mode_) {
      case Mode::thm1:
      case Mode::thm2:
        if (!fits("Y", ny_) || !fits("U", nu_) || !fits("V", nv_)) return std::nullopt;
        put(condition(j, {"U", "V"}, {"X"}), 0);
        put(condition(j, {"Y"}, {"U", "V"}), nx_ * nu_ * nv_);
        break;
      case Mode::thm3:
        if (!fits("Y", ny_) || !fits("U", nu_)) return std::nullopt;
        put(condition(j, {"Y", "U"}, {"X"}), 0);
        break;
      case Mode::thm4:
        if (!fits("Y", ny_)) return std::nullopt;
        put(condition(j, {"Y"}, {"X"}), 0);
        break;
      case Mode::lossless:
        if (!fits("U", nu_)) return std::nullopt;
        put(condition(j, {"U"}, {"X"}), 0);
        break;
    }
    normalize_blocks(th);
    return th;
  }

  void normalize_blocks(std::span<double> th) const {
    for (const auto& b : blocks_) {
      double s = 0.0;
      for (std::size_t i = 0; i < b.size; ++i) s += (th[b.offset + i] = std::max(0.0, th[b.offset + i]));
      for (std::size_t i = 0; i < b.size; ++i)
        th[b.offset + i] = s > 0.0 ? th[b.offset + i] / s : 1.0 / static_cast<double>(b.size);
    }
  }

  void project(std::span<double> th) const {
    for (const auto& b : blocks_) project_to_simplex(th.subspan(b.offset, b.size));
  }

 private:
  void add_blocks(std::size_t count, std::size_t size) {
    for (std::size_t i = 0; i < count; ++i) {
      blocks_.push_back({params_, size});
      params_ += size;
    }
  }

  void build_mask_maps() {
    for (const auto& c : constraints_)
      for (const auto& t : c.terms)
        if (std::find(masks_.begin(), masks_.end(), t.mask) == masks_.end()) masks_.push_back(t.mask);
    const std::array<std::size_t, 4> sizes{nx_, ny_, nu_, nv_};
    for (unsigned mask : masks_) {
      std::vector<std::uint32_t> map(cells_);
      std::size_t msize = 1;
      for (int d = 0; d < 4; ++d)
        if (mask & (1u << d)) msize *= sizes[d];
      for (std::size_t c = 0; c < cells_; ++c) {
        std::array<std::size_t, 4> coord{};
        std::size_t rest = c;
        for (int d = 3; d >= 0; --d) {
          coord[d] = rest % sizes[d];
          rest /= sizes[d];
        }
        std::size_t idx = 0;
        for (int d = 0; d < 4; ++d)
          if (mask & (1u << d)) idx = idx * sizes[d] + coord[d];
        map[c] = static_cast<std::uint32_t>(idx);
      }
      mask_maps_.push_back(std::move(map));
      mask_cells_.push_back(msize);
    }
  }

  Mode mode_;
  std::vector<double> p0_;
  PayoffTensor pi_;
  std::size_t nx_, ny_, nz_, nu_ = 1, nv_ = 1, cells_ = 0, params_ = 0;
  std::vector<Block> blocks_;
  std::vector<RateConstraint> constraints_;
  std::vector<unsigned> masks_;
  std::vector<std::vector<std::uint32_t>> mask_maps_;
  std::vector<std::size_t> mask_cells_;
};

struct Evaluation {
  double surrogate = 0.0;
  double value = 0.0;  // exact inner min
  std::array<double, 2> rates{};
  bool feasible = false;
};

struct Smoothing {
  double mu = 1.0;         // penalty weight
  double tau = 0.0;        // soft-min temperature (0 = exact min)
  double hinge = 0.0;      // Huber width of the penalty hinge (0 = exact)
};

/// Evaluates the penalized surrogate, the exact objective and the rate
/// functionals at one point; optionally the surrogate's gradient.
class Evaluator {
 public:
  explicit Evaluator(const Program& prog)
      : prog_(prog), P_(prog.cells()), dP_(prog.cells()), L_(prog.nz()), w_(prog.nz()) {
    for (std::size_t k = 0; k < prog.masks().size(); ++k) {
      marg_.emplace_back(prog.mask_cells(k));
      logm_.emplace_back(prog.mask_cells(k));
    }
  }

  Evaluation operator()(std::span<const double> th, const Smoothing& sm, double feas_tol,
                        std::span<double> grad = {}) {
    const auto& pr = prog_;
    pr.joint(th, P_);
    bool want_grad = !grad.empty();
    if (want_grad) std::fill(dP_.begin(), dP_.end(), 0.0);

    Evaluation ev;
    const PayoffTensor& pi = pr.pi();
    const std::size_t nx = pr.nx(), ny = pr.ny(), nu = pr.nu(), nv = pr.nv(), nz = pr.nz();
    for (std::size_t u = 0; u < nu; ++u) {
      std::fill(L_.begin(), L_.end(), 0.0);
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
          double m = 0.0;
          for (std::size_t v = 0; v < nv; ++v) m += P_[pr.cell(x, y, u, v)];
          if (m == 0.0) continue;
          for (std::size_t z = 0; z < nz; ++z) L_[z] += m * pi(x, y, z);
        }
      std::size_t zbest = 0;
      for (std::size_t z = 1; z < nz; ++z)
        if (L_[z] < L_[zbest]) zbest = z;
      double lmin = L_[zbest];
      ev.value += lmin;
      if (sm.tau > 0.0) {
        double s = 0.0;
        for (std::size_t z = 0; z < nz; ++z) s += (w_[z] = std::exp(-(L_[z] - lmin) / sm.tau));
        for (auto& wz : w_) wz /= s;
        ev.surrogate += lmin - sm.tau * std::log(s);
      } else {
        std::fill(w_.begin(), w_.end(), 0.0);
        w_[zbest] = 1.0;
        ev.surrogate += lmin;
      }
      if (want_grad)
        for (std::size_t x = 0; x < nx; ++x)
          for (std::size_t y = 0; y < ny; ++y) {
            double d = 0.0;
            for (std::size_t z = 0; z < nz; ++z) d += w_[z] * pi(x, y, z);
            for (std::size_t v = 0; v < nv; ++v) dP_[pr.cell(x, y, u, v)] = d;
          }
    }

    const auto& masks = pr.masks();
    std::array<double, 16> H{};
    for (std::size_t k = 0; k < masks.size(); ++k) {
      auto& m = marg_[k];
      std::fill(m.begin(), m.end(), 0.0);
      const auto& map = pr.mask_map(k);
      for (std::size_t c = 0; c < P_.size(); ++c) m[map[c]] += P_[c];
      double h = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        double p = m[i];
        double lp = std::log2(std::max(p, kLogFloor));
        logm_[k][i] = lp;
        if (p > 0.0) h -= p * lp;
      }
      H[masks[k]] = h;
    }

    ev.feasible = true;
    const auto& cons = pr.constraints();
    for (std::size_t c = 0; c < cons.size(); ++c) {
      double rate = 0.0;
      for (const auto& t : cons[c].terms) rate += t.coef * H[t.mask];
      ev.rates[c] = rate;
      double s = rate - cons[c].bound;
      if (s > feas_tol) ev.feasible = false;
      double pen = 0.0, dpen = 0.0;
      if (s > 0.0) {
        if (sm.hinge > 0.0 && s < sm.hinge) {
          pen = s * s / (2.0 * sm.hinge);
          dpen = s / sm.hinge;
        } else {
          pen = s - 0.5 * sm.hinge;
          dpen = 1.0;
        }
      }
      ev.surrogate -= sm.mu * pen;
      if (want_grad && dpen > 0.0) {
        for (const auto& t : cons[c].terms) {
          std::size_t k = pr.mask_slot(t.mask);
          const auto& map = pr.mask_map(k);
          double f = sm.mu * dpen * t.coef;
          for (std::size_t cc = 0; cc < dP_.size(); ++cc)
            dP_[cc] += f * (logm_[k][map[cc]] + std::numbers::log2e);
        }
      }
    }
    if (want_grad) pr.pullback(th, dP_, grad);
    return ev;
  }

 private:
  static constexpr double kLogFloor = 1e-12;

  const Program& prog_;
  std::vector<double> P_, dP_, L_, w_;
  std::vector<std::vector<double>> marg_, logm_;
};

/// Central differences along the simplex directions e_i - 1/k; used as an
/// alternative gradient and to check the analytic one.
inline void finite_difference_gradient(const Program& prog, Evaluator& eval, std::span<const double> th,
                                       const Smoothing& sm, double h, std::span<double> grad) {
  std::vector<double> probe(th.begin(), th.end());
  for (const auto& b : prog.blocks()) {
    double inv_k = 1.0 / static_cast<double>(b.size);
    for (std::size_t i = 0; i < b.size; ++i) {
      auto shifted = [&](double sign) {
        std::copy(th.begin(), th.end(), probe.begin());
        for (std::size_t j = 0; j < b.size; ++j) probe[b.offset + j] += sign * h * ((j == i ? 1.0 : 0.0) - inv_k);
        prog.normalize_blocks(probe);
        return eval(probe, sm, 0.0).surrogate;
      };
      grad[b.offset + i] = b.size == 1 ? 0.0 : (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
    }
  }
}

struct AscentOutcome {
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> best_point;
  bool converged = false;
};

inline AscentOutcome ascend(const Program& prog, std::vector<double> th, const SolverConfig& cfg) {
  Evaluator eval(prog);
  AscentOutcome out;
  auto consider = [&](std::span<const double> point, const Evaluation& e) {
    if (e.feasible && e.value > out.best_value) {
      out.best_value = e.value;
      out.best_point.assign(point.begin(), point.end());
    }
  };

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : prog.pi().values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double pi_range = std::max(hi - lo, 1e-12);

  std::vector<double> g(th.size()), cand(th.size()), gc(th.size());
  auto evaluate = [&](std::span<const double> point, const Smoothing& sm, std::span<double> grad) {
    if (cfg.gradient == GradientMethod::analytic) return eval(point, sm, cfg.feas_tol, grad);
    Evaluation e = eval(point, sm, cfg.feas_tol);
    finite_difference_gradient(prog, eval, point, sm, cfg.fd_step, grad);
    return e;
  };

  Smoothing sm;
  sm.mu = cfg.penalty_initial;
  Evaluation cur;
  bool round_converged = false;
  for (int round = 0; round < cfg.penalty_rounds; ++round) {
    double shrink = std::pow(0.25, round);
    sm.tau = cfg.smoothing * pi_range * shrink;
    sm.hinge = cfg.smoothing * shrink;
    cur = evaluate(th, sm, g);
    consider(th, cur);
    double step = cfg.initial_step;
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.max_iters_per_round) + 1);
    trace.push_back(cur.surrogate);
    round_converged = false;
    for (int it = 0; it < cfg.max_iters_per_round; ++it) {
      double gnorm = 0.0;
      for (double v : g) gnorm = std::max(gnorm, std::abs(v));
      if (gnorm < 1e-14) {
        round_converged = true;
        break;
      }
      for (std::size_t i = 0; i < th.size(); ++i) cand[i] = th[i] + step / gnorm * g[i];
      prog.project(cand);
      Evaluation next = evaluate(cand, sm, gc);
      if (next.surrogate > cur.surrogate) {
        th.swap(cand);
        g.swap(gc);
        cur = next;
        consider(th, cur);
        step = std::min(step * 1.5, 4.0 * cfg.initial_step);
      } else {
        step *= 0.5;
        if (step < 1e-12) {
          round_converged = true;
          break;
        }
      }
      trace.push_back(cur.surrogate);
      auto w = static_cast<std::size_t>(cfg.stall_window);
      if (trace.size() > w && trace.back() - trace[trace.size() - 1 - w] < cfg.stall_tol) {
        round_converged = true;
        break;
      }
    }
    sm.mu *= cfg.penalty_growth;
  }
  out.converged = round_converged;

  // Feasibility restoration: slide toward the anchor until the rates fit.
  Smoothing exact;
  Evaluation last = eval(th, exact, cfg.feas_tol);
  if (!last.feasible) {
    std::vector<double> a = prog.anchor(th), mid(th.size());
    Evaluation ea = eval(a, exact, cfg.feas_tol);
    if (ea.feasible) {
      double t_lo = 0.0, t_hi = 1.0;
      for (int k = 0; k < 60; ++k) {
        double t = 0.5 * (t_lo + t_hi);
        for (std::size_t i = 0; i < th.size(); ++i) mid[i] = (1.0 - t) * th[i] + t * a[i];
        (eval(mid, exact, cfg.feas_tol).feasible ? t_hi : t_lo) = t;
      }
      for (std::size_t i = 0; i < th.size(); ++i) mid[i] = (1.0 - t_hi) * th[i] + t_hi * a[i];
      consider(mid, eval(mid, exact, cfg.feas_tol));
    }
  }
  return out;
}

}  // namespace detail

/// Core driver shared by every mode.
inline SolveResult solve(const ProblemInstance& prob, Mode mode, std::size_t card_u, std::size_t card_v,
                         const SolverConfig& cfg = {}) {
  prob.validate();
  if (mode == Mode::thm4 && !(prob.r0 > 0.0))
    throw InfeasibleError(
        "message-only adversary requires R0 > 0: the value is discontinuous at R0 = 0, "
        "where the past-observing programs apply instead");
  if (mode == Mode::lossless) {
    if (prob.nx() != prob.ny()) throw ArgumentError("lossless mode needs |Y| = |X|");
    if (prob.r < prob.source_entropy() - kNormTol)
      throw InfeasibleError("lossless reproduction needs R >= H(X) = " + std::to_string(prob.source_entropy()));
  }
  if (mode == Mode::thm4) card_u = card_v = 1;
  if (mode == Mode::thm3 || mode == Mode::lossless) card_v = 1;

  detail::Program prog(prob, mode, card_u, card_v, cfg.thm3_constraint);

  // Cardinality continuation: optima at roughly half the auxiliary alphabet
  // sizes embed as feasible starting points here.
  std::vector<JointDist> lifted;
  if (card_u > 2 || card_v > 2) {
    SolverConfig sub = cfg;
    sub.restarts = std::max(cfg.restarts / 2, 1);
    auto half = [](std::size_t c) { return c > 2 ? (c + 1) / 2 : c; };
    SolveResult small = solve(prob, mode, half(card_u), half(card_v), sub);
    if (small.status != SolveStatus::infeasible_cardinality) lifted.push_back(std::move(small.joint));
  }

  std::vector<std::vector<double>> starts;
  for (const auto& w : lifted)
    if (auto th = prog.params_from_joint(w)) starts.push_back(std::move(*th));
  for (const auto& w : cfg.warm_starts)
    if (auto th = prog.params_from_joint(w)) starts.push_back(std::move(*th));
  std::size_t warm = starts.size();
  auto total = warm + static_cast<std::size_t>(std::max(cfg.restarts, 1));
  starts.push_back(prog.uniform_start());
  starts.push_back(prog.identity_start(true));
  starts.push_back(prog.identity_start(false));
  for (std::size_t r = starts.size(); r < total; ++r) {
    Stream s(cfg.seed, "solver-start", {static_cast<std::uint64_t>(mode), r});
    starts.push_back(prog.random_start(s));
  }
  starts.resize(total);

  std::vector<detail::AscentOutcome> outcomes(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) { outcomes[i] = detail::ascend(prog, starts[i], cfg); });

  SolveResult res;
  res.mode = mode;
  res.card_u = prog.nu();
  res.card_v = prog.nv();
  res.restarts_run = static_cast<int>(starts.size());
  std::size_t best = outcomes.size();
  bool any_converged = false;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    any_converged = any_converged || outcomes[i].converged;
    if (!outcomes[i].best_point.empty() && (best == outcomes.size() || outcomes[i].best_value > outcomes[best].best_value))
      best = i;
  }
  if (best == outcomes.size()) {
    res.status = SolveStatus::infeasible_cardinality;
    res.joint = prog.to_joint_dist(prog.anchor(prog.uniform_start()));
    res.zmap = inner_best_response(res.joint, prob.pi).zmap;
    return res;
  }
  res.status = any_converged ? SolveStatus::converged : SolveStatus::max_iters;
  res.joint = prog.to_joint_dist(outcomes[best].best_point);
  if (mode == Mode::thm4 && prob.r == 0.0) {
    // I(X;Y) <= 0 only up to feas_tol, which leaves O(sqrt(feas_tol)) dependence; snap to independence.
    const JointDist px = res.joint.marginal({"X"}), py = res.joint.marginal({"Y"});
    std::vector<double> prod;
    prod.reserve(prob.nx() * prob.ny());
    for (double a : px.mass())
      for (double b : py.mass()) prod.push_back(a * b);
    res.joint = JointDist({{"X", prob.nx()}, {"Y", prob.ny()}, {"U", 1}}, std::move(prod));
  }
  BestResponse br = inner_best_response(res.joint, prob.pi);
  res.zmap = br.zmap;
  res.value = br.value;
  const JointDist& j = res.joint;
  switch (mode) {
    case Mode::thm1:
      res.msg_rate_used = mutual_information(j, {"X"}, {"U", "V"});
      res.key_rate_used = mutual_information(j, {"X", "Y"}, {"V"}, {"U"});
      break;
    case Mode::thm2:
      res.msg_rate_used = mutual_information(j, {"X"}, {"U", "V"});
      res.key_rate_used = mutual_information(j, {"Y"}, {"V"}, {"U"});
      break;
    case Mode::thm3:
      res.msg_rate_used = mutual_information(j, {"X"}, {"U", "Y"});
      res.key_rate_used = cfg.thm3_constraint == Thm3Constraint::IXYgU ? mutual_information(j, {"X"}, {"Y"}, {"U"})
                                                                       : mutual_information(j, {"X", "Y"}, {"U"});
      break;
    case Mode::thm4:
      res.msg_rate_used = mutual_information(j, {"X"}, {"Y"});
      res.key_rate_used = 0.0;
      break;
    case Mode::lossless:
      res.msg_rate_used = entropy(j, {"X"});
      res.key_rate_used = entropy(j, {"X"}, {"U"});
      break;
  }
  return res;
}

/// Full causal adversary (past source, actions and its own moves).
inline SolveResult solve_theorem1(const ProblemInstance& prob, std::size_t card_u, std::size_t card_v,
                                  const SolverConfig& cfg = {}) {
  return solve(prob, Mode::thm1, card_u, card_v, cfg);
}

/// Adversary sees past actions of the receiver but not the past source.
inline SolveResult solve_theorem2(const ProblemInstance& prob, std::size_t card_u, std::size_t card_v,
                                  const SolverConfig& cfg = {}) {
  return solve(prob, Mode::thm2, card_u, card_v, cfg);
}

/// Adversary sees the past source but not the receiver's actions.
inline SolveResult solve_theorem3(const ProblemInstance& prob, std::size_t card_u, const SolverConfig& cfg = {}) {
  return solve(prob, Mode::thm3, card_u, 1, cfg);
}

/// Adversary sees only the message; any positive key rate suffices.
inline SolveResult solve_theorem4(const ProblemInstance& prob, const SolverConfig& cfg = {}) {
  return solve(prob, Mode::thm4, 1, 1, cfg);
}

/// Receiver must reproduce the source exactly.
inline SolveResult solve_lossless(const ProblemInstance& prob, std::size_t card_u, const SolverConfig& cfg = {}) {
  return solve(prob, Mode::lossless, card_u, 1, cfg);
}

/// Value of a single private (fully hidden) channel of rate `rate`.
inline double baseline_private_channel(const ProblemInstance& prob, double rate, const SolverConfig& cfg = {}) {
  if (!(rate >= 0.0)) throw ArgumentError("rate must be nonnegative");
  return solve_theorem4(prob.with_rates(1.0, rate), cfg).value;
}

struct SweepRow {
  double r0 = 0.0;
  double r = 0.0;
  double value = std::numeric_limits<double>::quiet_NaN();
  SolveStatus status = SolveStatus::infeasible;
  int restarts = 0;
};

namespace detail {

inline std::vector<std::size_t> ascending_order(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace detail

/// Solves `mode` on every (r0, r) grid point; rows come out in row-major order
/// of the lists as given. Points are solved in ascending rate order and each is
/// warm-started from its already-solved lower neighbours, whose optima remain
/// feasible, so the table is monotone in both rates.
inline std::vector<SweepRow> sweep(const ProblemInstance& tmpl, std::span<const double> r0s,
                                   std::span<const double> rs, Mode mode, std::size_t card_u, std::size_t card_v,
                                   const SolverConfig& cfg = {}) {
  std::vector<SweepRow> rows(r0s.size() * rs.size());
  std::vector<std::optional<JointDist>> joints(rows.size());
  auto oi = detail::ascending_order(r0s), oj = detail::ascending_order(rs);
  for (std::size_t a = 0; a < oi.size(); ++a)
    for (std::size_t b = 0; b < oj.size(); ++b) {
      std::size_t i = oi[a], j = oj[b], slot = i * rs.size() + j;
      SolverConfig c = cfg;
      if (a > 0 && joints[oi[a - 1] * rs.size() + j]) c.warm_starts.push_back(*joints[oi[a - 1] * rs.size() + j]);
      if (b > 0 && joints[i * rs.size() + oj[b - 1]]) c.warm_starts.push_back(*joints[i * rs.size() + oj[b - 1]]);
      SweepRow& row = rows[slot];
      row.r0 = r0s[i];
      row.r = rs[j];
      try {
        SolveResult res = solve(tmpl.with_rates(r0s[i], rs[j]), mode, card_u, card_v, c);
        row.value = res.value;
        row.status = res.status;
        row.restarts = res.restarts_run;
        if (res.status != SolveStatus::infeasible_cardinality) joints[slot] = res.joint;
      } catch (const InfeasibleError&) {
        row.status = SolveStatus::infeasible;
      }
    }
  return rows;
}

/// All four adversary models at one rate pair.
struct LadderPoint {
  double r0 = 0.0;
  double r = 0.0;
  SolveResult thm1, thm2, thm3;
  std::optional<SolveResult> thm4;  // absent at r0 = 0
};

/// Solves every adversary model on a rate grid, warm-starting each program from
/// the optima of the programs it provably dominates (stronger adversary, or
/// lower rates). The returned estimates therefore respect
/// thm1 <= thm2 <= thm4 and thm1 <= thm3 <= thm4 (with the default thm3 key
/// reading) and are monotone in both rates.
inline std::vector<LadderPoint> solve_ladder(const ProblemInstance& tmpl, std::span<const double> r0s,
                                             std::span<const double> rs, std::size_t card_u, std::size_t card_v,
                                             const SolverConfig& cfg = {}) {
  std::vector<LadderPoint> grid(r0s.size() * rs.size());
  auto oi = detail::ascending_order(r0s), oj = detail::ascending_order(rs);
  auto neighbours = [&](std::size_t a, std::size_t b, auto pick) {
    std::vector<JointDist> w;
    std::size_t i = oi[a], j = oj[b];
    if (a > 0) {
      if (const SolveResult* s = pick(grid[oi[a - 1] * rs.size() + j]); s && s->status != SolveStatus::infeasible_cardinality)
        w.push_back(s->joint);
    }
    if (b > 0) {
      if (const SolveResult* s = pick(grid[i * rs.size() + oj[b - 1]]); s && s->status != SolveStatus::infeasible_cardinality)
        w.push_back(s->joint);
    }
    return w;
  };
  for (std::size_t a = 0; a < oi.size(); ++a)
    for (std::size_t b = 0; b < oj.size(); ++b) {
      std::size_t i = oi[a], j = oj[b];
      LadderPoint& pt = grid[i * rs.size() + j];
      pt.r0 = r0s[i];
      pt.r = rs[j];
      ProblemInstance prob = tmpl.with_rates(r0s[i], rs[j]);
      auto usable = [](const SolveResult& s) { return s.status != SolveStatus::infeasible_cardinality; };

      SolverConfig c1 = cfg;
      c1.warm_starts = neighbours(a, b, [](const LadderPoint& p) { return &p.thm1; });
      pt.thm1 = solve_theorem1(prob, card_u, card_v, c1);

      SolverConfig c2 = cfg;
      c2.warm_starts = neighbours(a, b, [](const LadderPoint& p) { return &p.thm2; });
      if (usable(pt.thm1)) c2.warm_starts.push_back(pt.thm1.joint);
      pt.thm2 = solve_theorem2(prob, card_u, card_v, c2);

      SolverConfig c3 = cfg;
      c3.warm_starts = neighbours(a, b, [](const LadderPoint& p) { return &p.thm3; });
      if (usable(pt.thm1)) c3.warm_starts.push_back(pt.thm1.joint.marginal({"X", "Y", "U"}));
      pt.thm3 = solve_theorem3(prob, card_u, c3);

      if (prob.r0 > 0.0) {
        SolverConfig c4 = cfg;
        c4.warm_starts = neighbours(a, b, [](const LadderPoint& p) { return p.thm4 ? &*p.thm4 : nullptr; });
        for (const SolveResult* s : {&pt.thm1, &pt.thm2, &pt.thm3})
          if (usable(*s)) c4.warm_starts.push_back(s->joint.marginal({"X", "Y"}));
        pt.thm4 = solve_theorem4(prob, c4);
      }
    }
  return grid;
}

}  // namespace keyfoil

#endif  // KEYFOIL_REGION_HPP
