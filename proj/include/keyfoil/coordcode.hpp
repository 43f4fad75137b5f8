#ifndef KEYFOIL_COORDCODE_HPP
#define KEYFOIL_COORDCODE_HPP

// Two-layer random codebook scheme. The public U layer coordinates
// empirically with the source; the keyed V layer, indexed by (j1, j2, k),
// carries the rest of the description, and the decoder synthesizes
// p(y | u, v) letter by letter from (j, k) alone.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "keyfoil/errors.hpp"
#include "keyfoil/probcore.hpp"
#include "keyfoil/region.hpp"
#include "keyfoil/rng.hpp"

namespace keyfoil {

inline constexpr double kDefaultDelta = 0.1;
inline constexpr double kDefaultEps = 0.15;
inline constexpr std::uint64_t kCodebookMaxSymbols = std::uint64_t{1} << 26;
/// Log-likelihood charged for a letter the target forbids. Below any sum of
/// finite log-probabilities over a block, so ML ranks words by their number of
/// forbidden letters first.
inline constexpr double kForbiddenLog = -1e6;

using Symbol = std::uint8_t;

struct CodebookSpec {
  std::size_t n = 1;
  double rate_u = 0.0;
  double rate_v = 0.0;
  double rate_key = 0.0;
  JointDist target;  // axes X, Y, U, V
  std::uint64_t seed = 1;
  double eps = kDefaultEps;
};

/// Index bits for `rate` bits/symbol over n symbols: ceil(n * rate).
inline unsigned index_bits(std::size_t n, double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw ArgumentError("rates must be finite and nonnegative");
  double b = std::ceil(static_cast<double>(n) * rate - 1e-9);
  if (b > 40.0) throw GuardError("index space of 2^" + std::to_string(static_cast<long long>(b)) + " is too large");
  return static_cast<unsigned>(std::max(0.0, b));
}

/// Reorders to (X, Y, U, V) and checks p(y | u, v, x) = p(y | u, v) within 1e-9.
inline JointDist checked_target(const JointDist& target) {
  for (const char* a : {"X", "Y", "U", "V"})
    if (!target.has_axis(a)) throw AxisError(std::string("codebook target needs axis ") + a);
  if (target.axes().size() != 4) throw AxisError("codebook target must have exactly the axes X, Y, U, V");
  JointDist t = target.marginal({"X", "Y", "U", "V"});
  for (const auto& a : t.axes())
    if (a.size > 255) throw ArgumentError("alphabets above 255 letters are not supported");
  std::size_t nx = t.axes()[0].size, ny = t.axes()[1].size, nu = t.axes()[2].size, nv = t.axes()[3].size;
  auto m = t.mass();
  for (std::size_t u = 0; u < nu; ++u)
    for (std::size_t v = 0; v < nv; ++v) {
      double puv = 0.0;
      std::vector<double> py(ny, 0.0);
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
          double q = m[((x * ny + y) * nu + u) * nv + v];
          puv += q;
          py[y] += q;
        }
      if (puv <= 0.0) continue;
      for (std::size_t x = 0; x < nx; ++x) {
        double pxuv = 0.0;
        for (std::size_t y = 0; y < ny; ++y) pxuv += m[((x * ny + y) * nu + u) * nv + v];
        if (pxuv <= 0.0) continue;
        for (std::size_t y = 0; y < ny; ++y)
          if (std::abs(m[((x * ny + y) * nu + u) * nv + v] / pxuv - py[y] / puv) > 1e-9)
            throw ArgumentError("codebook target violates p(y|u,v,x) = p(y|u,v)");
      }
    }
  return t;
}

/// Rates R1 = I(X;U) + delta, R2 = I(X;V|U) + delta and key I(X,Y;V|U) + delta.
inline CodebookSpec make_spec(const JointDist& target, std::size_t n, std::uint64_t seed, double delta = kDefaultDelta,
                              double eps = kDefaultEps) {
  if (n < 1) throw ArgumentError("blocklength must be at least 1");
  if (!(delta >= 0.0) || !(eps > 0.0)) throw ArgumentError("delta must be >= 0 and eps > 0");
  JointDist t = checked_target(target);
  CodebookSpec s;
  s.n = n;
  s.rate_u = mutual_information(t, {"X"}, {"U"}) + delta;
  s.rate_v = mutual_information(t, {"X"}, {"V"}, {"U"}) + delta;
  s.rate_key = mutual_information(t, {"X", "Y"}, {"V"}, {"U"}) + delta;
  s.target = std::move(t);
  s.seed = seed;
  s.eps = eps;
  return s;
}

/// Maps a solver optimum to a two-layer target over (X, Y, U, V). Programs
/// without a V layer route Y (or X, when lossless) through V.
inline JointDist scheme_target(const SolveResult& res) {
  const JointDist& j = res.joint;
  if (j.has_axis("V")) return j.marginal({"X", "Y", "U", "V"});
  JointDist xyu = j.marginal({"X", "Y", "U"});
  std::size_t nx = xyu.axes()[0].size, ny = xyu.axes()[1].size, nu = xyu.axes()[2].size;
  bool lossless = res.mode == Mode::lossless;
  std::size_t nv = lossless ? nx : ny;
  std::vector<double> mass(nx * ny * nu * nv, 0.0);
  auto src = xyu.mass();
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t u = 0; u < nu; ++u) {
        std::size_t v = lossless ? x : y;
        mass[((x * ny + y) * nu + u) * nv + v] = src[(x * ny + y) * nu + u];
      }
  return JointDist({{"X", nx}, {"Y", ny}, {"U", nu}, {"V", nv}}, std::move(mass));
}

/// Random two-layer codebook. U words are stored; V words are regenerated on
/// demand from (seed, j1, j2, k), which keeps memory flat in the key size.
class Codebook {
 public:
  explicit Codebook(CodebookSpec spec) : spec_(std::move(spec)) {
    if (spec_.n < 1) throw ArgumentError("blocklength must be at least 1");
    if (!(spec_.eps > 0.0)) throw ArgumentError("eps must be positive");
    spec_.target = checked_target(spec_.target);
    const auto& ax = spec_.target.axes();
    nx_ = ax[0].size;
    ny_ = ax[1].size;
    nu_ = ax[2].size;
    nv_ = ax[3].size;
    u_bits_ = index_bits(spec_.n, spec_.rate_u);
    v_bits_ = index_bits(spec_.n, spec_.rate_v);
    key_bits_ = index_bits(spec_.n, spec_.rate_key);
    if (u_bits_ + v_bits_ + key_bits_ > 62) throw GuardError("combined index space exceeds 2^62");
    if (static_cast<double>(u_count()) * static_cast<double>(spec_.n) > static_cast<double>(kCodebookMaxSymbols))
      throw GuardError("codebook would store " + std::to_string(u_count() * spec_.n) + " symbols (limit 2^26)");
    build_tables();
    draw_u_words();
    v_base_ = derive_key(spec_.seed, "codebook-v", {});
  }

  const CodebookSpec& spec() const noexcept { return spec_; }
  const JointDist& target() const noexcept { return spec_.target; }
  std::size_t n() const noexcept { return spec_.n; }
  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nu() const noexcept { return nu_; }
  std::size_t nv() const noexcept { return nv_; }
  unsigned u_bits() const noexcept { return u_bits_; }
  unsigned v_bits() const noexcept { return v_bits_; }
  unsigned key_bits() const noexcept { return key_bits_; }
  std::uint64_t u_count() const noexcept { return std::uint64_t{1} << u_bits_; }
  std::uint64_t v_count() const noexcept { return std::uint64_t{1} << v_bits_; }
  std::uint64_t key_count() const noexcept { return std::uint64_t{1} << key_bits_; }

  std::span<const Symbol> u_word(std::uint64_t j1) const {
    return std::span<const Symbol>(u_words_).subspan(j1 * spec_.n, spec_.n);
  }
  Symbol u_symbol(std::uint64_t j1, std::size_t i) const { return u_words_[j1 * spec_.n + i]; }

  std::uint64_t v_word_key(std::uint64_t j1, std::uint64_t j2, std::uint64_t k) const noexcept {
    return mix64(mix64(mix64(v_base_ ^ j1) ^ (j2 + 0x3c6ef372fe94f82bULL)) ^ (k + 0xa54ff53a5f1d36f1ULL));
  }

  Symbol v_symbol(std::uint64_t j1, std::uint64_t j2, std::uint64_t k, std::size_t i) const {
    return draw_v(u_symbol(j1, i), Stream::bits_at(v_word_key(j1, j2, k), i));
  }

  void v_word(std::uint64_t j1, std::uint64_t j2, std::uint64_t k, std::span<Symbol> out) const {
    std::uint64_t key = v_word_key(j1, j2, k);
    for (std::size_t i = 0; i < spec_.n; ++i) out[i] = draw_v(u_symbol(j1, i), Stream::bits_at(key, i));
  }
  std::vector<Symbol> v_word(std::uint64_t j1, std::uint64_t j2, std::uint64_t k) const {
    std::vector<Symbol> w(spec_.n);
    v_word(j1, j2, k, w);
    return w;
  }

  // p(u, x) and p(u, v, x) for typicality; log p(x|u) and log p(x|u,v) for likelihood.
  double p_ux(std::size_t u, std::size_t x) const { return p_ux_[u * nx_ + x]; }
  double p_uvx(std::size_t u, std::size_t v, std::size_t x) const { return p_uvx_[(u * nv_ + v) * nx_ + x]; }
  double log_x_given_u(std::size_t u, std::size_t x) const { return log_xu_[u * nx_ + x]; }
  double log_x_given_uv(std::size_t u, std::size_t v, std::size_t x) const { return log_xuv_[(u * nv_ + v) * nx_ + x]; }
  std::span<const double> y_given_uv(std::size_t u, std::size_t v) const {
    return std::span<const double>(y_uv_).subspan((u * nv_ + v) * ny_, ny_);
  }

 private:
  Symbol draw_v(Symbol u, std::uint64_t bits) const {
    return static_cast<Symbol>(
        Stream::sample_index(std::span<const double>(v_u_).subspan(u * nv_, nv_), to_unit(bits)));
  }

  void build_tables() {
    const JointDist& t = spec_.target;
    JointDist ux = t.marginal({"U", "X"}), uvx = t.marginal({"U", "V", "X"});
    p_ux_.assign(ux.mass().begin(), ux.mass().end());
    p_uvx_.assign(uvx.mass().begin(), uvx.mass().end());
    JointDist pu = t.marginal({"U"});
    p_u_.assign(pu.mass().begin(), pu.mass().end());
    v_u_ = condition(t, {"V"}, {"U"}).table;
    y_uv_ = condition(t, {"Y"}, {"U", "V"}).table;
    auto xu = condition(t, {"X"}, {"U"}).table, xuv = condition(t, {"X"}, {"U", "V"}).table;
    auto lg = [](double p) { return p > 0.0 ? std::log(p) : kForbiddenLog; };
    for (double p : xu) log_xu_.push_back(lg(p));
    for (double p : xuv) log_xuv_.push_back(lg(p));
  }

  void draw_u_words() {
    u_words_.resize(u_count() * spec_.n);
    for (std::uint64_t j = 0; j < u_count(); ++j) {
      Stream s(spec_.seed, "codebook-u", {j});
      for (std::size_t i = 0; i < spec_.n; ++i) u_words_[j * spec_.n + i] = static_cast<Symbol>(s.categorical(p_u_));
    }
  }

  CodebookSpec spec_;
  std::size_t nx_ = 0, ny_ = 0, nu_ = 0, nv_ = 0;
  unsigned u_bits_ = 0, v_bits_ = 0, key_bits_ = 0;
  std::vector<double> p_u_, p_ux_, p_uvx_, v_u_, y_uv_, log_xu_, log_xuv_;
  std::vector<Symbol> u_words_;
  std::uint64_t v_base_ = 0;
};

inline Codebook build_codebook(const CodebookSpec& spec) { return Codebook(spec); }

struct LayerChoice {
  std::uint64_t index = 0;
  bool typical = false;
};

struct Encoding {
  std::uint64_t j1 = 0;
  std::uint64_t j2 = 0;
  bool fallback = false;
};

namespace detail {

/// Robust typicality: |N(c)/n - p(c)| <= eps p(c) + eps / cells for every cell.
inline bool robust_typical(std::span<const std::uint32_t> counts, std::span<const double> p, std::size_t n,
                           double eps) {
  double slack = eps / static_cast<double>(p.size());
  for (std::size_t c = 0; c < p.size(); ++c)
    if (std::abs(static_cast<double>(counts[c]) / static_cast<double>(n) - p[c]) > eps * p[c] + slack) return false;
  return true;
}

}  // namespace detail

/// First layer: the most likely u-word among those eps-typical with x; the
/// most likely overall (typical = false) when none is.
inline LayerChoice select_u(const Codebook& cb, std::span<const Symbol> x) {
  const std::size_t n = cb.n(), nx = cb.nx(), nu = cb.nu();
  std::vector<double> p(nu * nx);
  for (std::size_t u = 0; u < nu; ++u)
    for (std::size_t a = 0; a < nx; ++a) p[u * nx + a] = cb.p_ux(u, a);
  std::vector<std::uint32_t> counts(nu * nx);
  const double ninf = -std::numeric_limits<double>::infinity();
  double best_typ = ninf, best_any = ninf;
  std::uint64_t arg_typ = 0, arg_any = 0;
  bool found = false, any = false;
  for (std::uint64_t j = 0; j < cb.u_count(); ++j) {
    auto w = cb.u_word(j);
    std::fill(counts.begin(), counts.end(), 0);
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[w[i] * nx + x[i]];
      score += cb.log_x_given_u(w[i], x[i]);
    }
    if (!any || score > best_any) {
      best_any = score;
      arg_any = j;
      any = true;
    }
    if (detail::robust_typical(counts, p, n, cb.spec().eps) && (!found || score > best_typ)) {
      best_typ = score;
      arg_typ = j;
      found = true;
    }
  }
  return found ? LayerChoice{arg_typ, true} : LayerChoice{arg_any, false};
}

/// Second layer for several source words sharing j1: for each word, the most
/// likely v-word among (j1, ., k) eps-typical with (u-word, x).
inline std::vector<LayerChoice> select_v_batch(const Codebook& cb, std::span<const std::span<const Symbol>> xs,
                                               std::uint64_t j1, std::uint64_t k) {
  const std::size_t n = cb.n(), nx = cb.nx(), nu = cb.nu(), nv = cb.nv();
  std::vector<double> p(nu * nv * nx);
  for (std::size_t u = 0; u < nu; ++u)
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t a = 0; a < nx; ++a) p[(u * nv + v) * nx + a] = cb.p_uvx(u, v, a);
  const std::uint64_t count = cb.v_count();
  std::vector<Symbol> words(count * n);
  for (std::uint64_t j2 = 0; j2 < count; ++j2) cb.v_word(j1, j2, k, std::span<Symbol>(words).subspan(j2 * n, n));
  auto uw = cb.u_word(j1);
  // log p(x | u_i, v) per position, letter of v and letter of x.
  std::vector<double> lg(n * nv * nx);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t a = 0; a < nx; ++a) lg[(i * nv + v) * nx + a] = cb.log_x_given_uv(uw[i], v, a);

  std::vector<LayerChoice> out(xs.size());
  std::vector<std::uint32_t> counts(p.size());
  for (std::size_t w = 0; w < xs.size(); ++w) {
    auto x = xs[w];
    double best_typ = 0.0, best_any = 0.0;
    std::uint64_t arg_typ = 0, arg_any = 0;
    bool found = false;
    for (std::uint64_t j2 = 0; j2 < count; ++j2) {
      const Symbol* vw = &words[j2 * n];
      double score = 0.0;
      for (std::size_t i = 0; i < n; ++i) score += lg[(i * nv + vw[i]) * nx + x[i]];
      if (j2 == 0 || score > best_any) {
        best_any = score;
        arg_any = j2;
      }
      // Typicality only matters for a candidate that would win.
      if (found && !(score > best_typ)) continue;
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t i = 0; i < n; ++i) ++counts[(uw[i] * nv + vw[i]) * nx + x[i]];
      if (detail::robust_typical(counts, p, n, cb.spec().eps)) {
        best_typ = score;
        arg_typ = j2;
        found = true;
      }
    }
    out[w] = found ? LayerChoice{arg_typ, true} : LayerChoice{arg_any, false};
  }
  return out;
}

inline LayerChoice select_v(const Codebook& cb, std::span<const Symbol> x, std::uint64_t j1, std::uint64_t k) {
  std::span<const Symbol> one[] = {x};
  return select_v_batch(cb, one, j1, k)[0];
}

inline Encoding encode(std::span<const Symbol> x, std::uint64_t k, const Codebook& cb) {
  if (x.size() != cb.n()) throw ArgumentError("source word length differs from the blocklength");
  for (Symbol s : x)
    if (s >= cb.nx()) throw ArgumentError("source symbol out of range");
  if (k >= cb.key_count()) throw ArgumentError("key out of range");
  LayerChoice a = select_u(cb, x);
  LayerChoice b = select_v(cb, x, a.index, k);
  return {a.index, b.index, !(a.typical && b.typical)};
}

/// y_i from p(y | u_i(j1), v_i(j1, j2, k)); i is 0-based. Uses nothing but
/// the indices and the caller's stream.
inline Symbol decode_step(const Codebook& cb, std::uint64_t j1, std::uint64_t j2, std::uint64_t k, std::size_t i,
                          Stream& rng) {
  if (j1 >= cb.u_count() || j2 >= cb.v_count() || k >= cb.key_count() || i >= cb.n())
    throw ArgumentError("decoder index out of range");
  Symbol u = cb.u_symbol(j1, i), v = cb.v_symbol(j1, j2, k, i);
  return static_cast<Symbol>(rng.categorical(cb.y_given_uv(u, v)));
}

struct GameTrace {
  std::uint64_t j1 = 0;
  std::uint64_t j2 = 0;
  std::uint64_t k = 0;
  std::vector<Symbol> x_seq, y_seq, z_seq;
  std::vector<double> payoffs;
  bool encoder_fallback = false;
};

struct CoordinationStats {
  double single_l1 = 0.0;
  double pair_l1 = 0.0;
};

inline constexpr std::size_t kMinCoordinationTraces = 100;

/// L1 distance of pooled (x_i, y_i) frequencies from p(x, y), and of
/// consecutive-pair frequencies from p(x, y) x p(x, y).
inline CoordinationStats coordination_test(std::span<const GameTrace> traces, const JointDist& target) {
  if (traces.size() < kMinCoordinationTraces)
    throw ArgumentError("coordination_test needs at least " + std::to_string(kMinCoordinationTraces) + " traces");
  JointDist xy = target.marginal({"X", "Y"});
  std::size_t nx = xy.axes()[0].size, ny = xy.axes()[1].size, cells = nx * ny;
  auto p = xy.mass();
  std::vector<double> single(cells, 0.0), pair(cells * cells, 0.0);
  double ns = 0.0, np = 0.0;
  for (const auto& t : traces) {
    if (t.x_seq.size() != t.y_seq.size()) throw ArgumentError("trace sequences differ in length");
    for (std::size_t i = 0; i < t.x_seq.size(); ++i) {
      if (t.x_seq[i] >= nx || t.y_seq[i] >= ny) throw ArgumentError("trace symbol out of range");
      std::size_t c = t.x_seq[i] * ny + t.y_seq[i];
      single[c] += 1.0;
      ns += 1.0;
      if (i + 1 < t.x_seq.size()) {
        pair[c * cells + t.x_seq[i + 1] * ny + t.y_seq[i + 1]] += 1.0;
        np += 1.0;
      }
    }
  }
  CoordinationStats out;
  for (std::size_t c = 0; c < cells; ++c) out.single_l1 += std::abs(single[c] / ns - p[c]);
  if (np > 0.0)
    for (std::size_t a = 0; a < cells; ++a)
      for (std::size_t b = 0; b < cells; ++b) out.pair_l1 += std::abs(pair[a * cells + b] / np - p[a] * p[b]);
  return out;
}

}  // namespace keyfoil

#endif  // KEYFOIL_COORDCODE_HPP
