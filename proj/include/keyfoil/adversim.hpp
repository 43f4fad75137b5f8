#ifndef KEYFOIL_ADVERSIM_HPP
#define KEYFOIL_ADVERSIM_HPP

// Eavesdropper strategies. The adversary knows the codebook, encoder, decoder
// and source law; only the key is hidden from it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "keyfoil/coordcode.hpp"
#include "keyfoil/errors.hpp"
#include "keyfoil/parallel.hpp"
#include "keyfoil/probcore.hpp"
#include "keyfoil/region.hpp"

namespace keyfoil {

inline constexpr std::uint64_t kExactAdversaryMaxRows = std::uint64_t{1} << 20;
inline constexpr double kTieTol = 1e-12;

inline constexpr bool sees_source(AdversaryModel m) noexcept {
  return m == AdversaryModel::FullCausal || m == AdversaryModel::PastSourceOnly;
}
inline constexpr bool sees_actions(AdversaryModel m) noexcept {
  return m == AdversaryModel::FullCausal || m == AdversaryModel::PastActionsOnly;
}

/// What the adversary knows before choosing z_i: the message and the past
/// permitted by its model. The step index i equals zs.size().
struct AdversaryView {
  AdversaryModel model = AdversaryModel::FullCausal;
  std::uint64_t j1 = 0;
  std::uint64_t j2 = 0;
  std::optional<std::vector<Symbol>> xs;
  std::optional<std::vector<Symbol>> ys;
  std::vector<Symbol> zs;

  std::size_t step() const noexcept { return zs.size(); }
};

/// Builds the view at step i = z_hist.size(), keeping only permitted history.
inline AdversaryView make_view(AdversaryModel model, std::uint64_t j1, std::uint64_t j2, std::span<const Symbol> x_hist,
                               std::span<const Symbol> y_hist, std::span<const Symbol> z_hist) {
  AdversaryView v;
  v.model = model;
  v.j1 = j1;
  v.j2 = j2;
  std::size_t i = z_hist.size();
  if (sees_source(model)) v.xs = std::vector<Symbol>(x_hist.begin(), x_hist.begin() + static_cast<std::ptrdiff_t>(i));
  if (sees_actions(model)) v.ys = std::vector<Symbol>(y_hist.begin(), y_hist.begin() + static_cast<std::ptrdiff_t>(i));
  v.zs.assign(z_hist.begin(), z_hist.end());
  return v;
}

using Strategy = std::function<Symbol(const AdversaryView&)>;

/// argmin_z sum_{x,y} w(x, y) pi(x, y, z); values within 1e-12 of the minimum
/// count as ties and go to the smallest z.
inline Symbol argmin_action(std::span<const double> weight_xy, const PayoffTensor& pi) {
  std::vector<double> val(pi.nz(), 0.0);
  for (std::size_t x = 0; x < pi.nx(); ++x)
    for (std::size_t y = 0; y < pi.ny(); ++y) {
      double w = weight_xy[x * pi.ny() + y];
      if (w == 0.0) continue;
      for (std::size_t z = 0; z < pi.nz(); ++z) val[z] += w * pi(x, y, z);
    }
  double lo = *std::min_element(val.begin(), val.end());
  for (std::size_t z = 0; z < val.size(); ++z)
    if (val[z] <= lo + kTieTol) return static_cast<Symbol>(z);
  return 0;
}

/// Exact posterior best response. Precomputes the encoder on every
/// (key, source word) pair, so it is limited to |K| |X|^n <= 2^20.
class ExactAdversary {
 public:
  ExactAdversary(const Codebook& cb, const PayoffTensor& pi, std::span<const double> source)
      : cb_(&cb), pi_(pi), n_(cb.n()), nx_(cb.nx()), ny_(cb.ny()) {
    if (pi.nx() != nx_ || pi.ny() != ny_) throw ArgumentError("payoff alphabets differ from the codebook");
    if (source.size() != nx_) throw ArgumentError("source length differs from |X|");
    double words = std::pow(static_cast<double>(nx_), static_cast<double>(n_));
    if (words * static_cast<double>(cb.key_count()) > static_cast<double>(kExactAdversaryMaxRows))
      throw GuardError("exact best response needs |K| |X|^n <= 2^20 (have " +
                       std::to_string(static_cast<double>(cb.key_count()) * words) + ")");
    words_ = static_cast<std::uint64_t>(words);
    build(source);
  }

  const Codebook& codebook() const noexcept { return *cb_; }

  Symbol x_digit(std::uint64_t x_id, std::size_t i) const noexcept {
    for (std::size_t t = i + 1; t < n_; ++t) x_id /= nx_;
    return static_cast<Symbol>(x_id % nx_);
  }

  std::vector<Symbol> x_word(std::uint64_t x_id) const {
    std::vector<Symbol> w(n_);
    for (std::size_t i = n_; i-- > 0;) {
      w[i] = static_cast<Symbol>(x_id % nx_);
      x_id /= nx_;
    }
    return w;
  }

  /// Encoder output for (key, source word), read from the table.
  Encoding encoding(std::uint64_t k, std::uint64_t x_id) const {
    const Row& r = table_[k * words_ + x_id];
    return {r.j >> cb_->v_bits(), r.j & (cb_->v_count() - 1), r.fallback};
  }

  /// Posterior over (x_i, y_i), flattened as x * |Y| + y; uniform for views
  /// no key can produce.
  std::vector<double> posterior(const AdversaryView& view) const {
    const std::size_t i = view.step();
    if (i >= n_) throw ArgumentError("view step beyond the blocklength");
    if ((view.xs && view.xs->size() != i) || (view.ys && view.ys->size() != i))
      throw ArgumentError("view history length differs from its step");
    if (view.j1 >= cb_->u_count() || view.j2 >= cb_->v_count()) throw ArgumentError("message index out of range");
    std::uint64_t j = (view.j1 << cb_->v_bits()) | view.j2;
    std::vector<double> post(nx_ * ny_, 0.0);
    Symbol ui = cb_->u_symbol(view.j1, i);
    for (std::uint64_t k = 0; k < cb_->key_count(); ++k) {
      const auto& inv = inverse_[k];
      auto lo = std::lower_bound(inv.begin(), inv.end(), std::pair<std::uint64_t, std::uint64_t>{j, 0});
      if (lo == inv.end() || lo->first != j) continue;
      double wy = 1.0;
      if (view.ys)
        for (std::size_t t = 0; t < i && wy > 0.0; ++t)
          wy *= cb_->y_given_uv(cb_->u_symbol(view.j1, t), cb_->v_symbol(view.j1, view.j2, k, t))[(*view.ys)[t]];
      if (wy == 0.0) continue;
      auto py = cb_->y_given_uv(ui, cb_->v_symbol(view.j1, view.j2, k, i));
      for (auto it = lo; it != inv.end() && it->first == j; ++it) {
        std::uint64_t x_id = it->second;
        if (view.xs && !prefix_matches(x_id, *view.xs)) continue;
        double w = px_[x_id] * wy;
        Symbol xi = x_digit(x_id, i);
        for (std::size_t y = 0; y < ny_; ++y) post[xi * ny_ + y] += w * py[y];
      }
    }
    double total = 0.0;
    for (double p : post) total += p;
    if (total > 0.0) {
      for (auto& p : post) p /= total;
    } else {
      std::fill(post.begin(), post.end(), 1.0 / static_cast<double>(post.size()));
    }
    return post;
  }

  Symbol best_response(const AdversaryView& view) const { return argmin_action(posterior(view), pi_); }

  /// Strategy bound to this adversary; the adversary must outlive it.
  Strategy strategy() const {
    return [this](const AdversaryView& v) { return best_response(v); };
  }

 private:
  struct Row {
    std::uint64_t j;
    bool fallback;
  };

  bool prefix_matches(std::uint64_t x_id, const std::vector<Symbol>& prefix) const {
    for (std::size_t t = 0; t < prefix.size(); ++t)
      if (x_digit(x_id, t) != prefix[t]) return false;
    return true;
  }

  void build(std::span<const double> source) {
    const Codebook& cb = *cb_;
    std::vector<std::vector<Symbol>> xw(words_);
    px_.resize(words_);
    std::vector<LayerChoice> first(words_);
    std::vector<std::vector<std::uint64_t>> groups(cb.u_count());
    for (std::uint64_t x = 0; x < words_; ++x) {
      xw[x] = x_word(x);
      double p = 1.0;
      for (Symbol s : xw[x]) p *= source[s];
      px_[x] = p;
      first[x] = select_u(cb, xw[x]);
      groups[first[x].index].push_back(x);
    }
    table_.assign(cb.key_count() * words_, Row{0, false});
    std::vector<std::uint64_t> used;
    for (std::uint64_t j1 = 0; j1 < cb.u_count(); ++j1)
      if (!groups[j1].empty()) used.push_back(j1);
    parallel_for(used.size() * cb.key_count(), [&](std::size_t task) {
      std::uint64_t j1 = used[task / cb.key_count()], k = task % cb.key_count();
      const auto& g = groups[j1];
      std::vector<std::span<const Symbol>> batch;
      batch.reserve(g.size());
      for (std::uint64_t x : g) batch.emplace_back(xw[x]);
      auto second = select_v_batch(cb, batch, j1, k);
      for (std::size_t w = 0; w < g.size(); ++w)
        table_[k * words_ + g[w]] = Row{(j1 << cb.v_bits()) | second[w].index, !(first[g[w]].typical && second[w].typical)};
    });
    inverse_.resize(cb.key_count());
    for (std::uint64_t k = 0; k < cb.key_count(); ++k) {
      auto& inv = inverse_[k];
      inv.reserve(words_);
      for (std::uint64_t x = 0; x < words_; ++x) inv.emplace_back(table_[k * words_ + x].j, x);
      std::sort(inv.begin(), inv.end());
    }
  }

  const Codebook* cb_;
  PayoffTensor pi_;
  std::size_t n_, nx_, ny_;
  std::uint64_t words_ = 0;
  std::vector<double> px_;
  std::vector<Row> table_;
  std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> inverse_;
};

/// Plays zmap(u_i(j1)) at step i, ignoring history.
inline Strategy single_letter_attack(const Codebook& cb, std::vector<int> zmap) {
  if (zmap.size() != cb.nu()) throw ArgumentError("zmap must be total on U");
  return [&cb, zmap = std::move(zmap)](const AdversaryView& v) {
    return static_cast<Symbol>(zmap[cb.u_symbol(v.j1, v.step())]);
  };
}

/// Constant action.
inline Strategy blind_attack(int z_star) {
  if (z_star < 0 || z_star > 255) throw ArgumentError("action out of range");
  return [z = static_cast<Symbol>(z_star)](const AdversaryView&) { return z; };
}

/// Best constant action against the (X, Y) marginal of `joint`.
inline int best_blind_action(const JointDist& joint, const PayoffTensor& pi) {
  JointDist xy = joint.marginal({"X", "Y"});
  return argmin_action(xy.mass(), pi);
}

}  // namespace keyfoil

#endif  // KEYFOIL_ADVERSIM_HPP
