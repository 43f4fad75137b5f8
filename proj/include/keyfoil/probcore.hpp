#ifndef KEYFOIL_PROBCORE_HPP
#define KEYFOIL_PROBCORE_HPP

// Exact discrete probability machinery over small dense tensors: joint pmfs
// with named axes, marginals, conditionals, entropies and mutual informations
// (base 2), and payoff expectations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "keyfoil/errors.hpp"

namespace keyfoil {

inline constexpr double kNormTol = 1e-9;

struct Axis {
  std::string name;
  std::size_t size = 1;

  friend bool operator==(const Axis&, const Axis&) = default;
};

using AxisSet = std::vector<std::string>;

inline double xlog2x(double p) noexcept { return p > 0.0 ? p * std::log2(p) : 0.0; }

/// Dense nonnegative tensor over named axes with total mass 1 (within 1e-9).
/// Storage is row-major: the first axis varies slowest.
class JointDist {
 public:
  JointDist() = default;

  JointDist(std::vector<Axis> axes, std::vector<double> mass) : axes_(std::move(axes)), mass_(std::move(mass)) {
    std::size_t cells = 1;
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      if (axes_[i].size < 1) throw ArgumentError("axis '" + axes_[i].name + "' has size 0");
      for (std::size_t j = 0; j < i; ++j)
        if (axes_[j].name == axes_[i].name) throw AxisError("duplicate axis '" + axes_[i].name + "'");
      cells *= axes_[i].size;
    }
    if (mass_.size() != cells)
      throw ArgumentError("mass has " + std::to_string(mass_.size()) + " entries, axes need " + std::to_string(cells));
    double total = 0.0;
    for (double m : mass_) {
      if (!(m >= 0.0)) throw NormalizationError("negative or non-finite probability mass");
      total += m;
    }
    if (std::abs(total - 1.0) > kNormTol)
      throw NormalizationError("total mass " + std::to_string(total) + " is not 1");
  }

  const std::vector<Axis>& axes() const noexcept { return axes_; }
  std::span<const double> mass() const noexcept { return mass_; }
  std::size_t cells() const noexcept { return mass_.size(); }

  bool has_axis(std::string_view name) const noexcept {
    return std::any_of(axes_.begin(), axes_.end(), [&](const Axis& a) { return a.name == name; });
  }

  std::size_t axis_index(std::string_view name) const {
    for (std::size_t i = 0; i < axes_.size(); ++i)
      if (axes_[i].name == name) return i;
    throw AxisError("unknown axis '" + std::string(name) + "'");
  }

  std::size_t axis_size(std::string_view name) const { return axes_[axis_index(name)].size; }

  double at(std::span<const std::size_t> index) const {
    if (index.size() != axes_.size()) throw ArgumentError("index rank mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < axes_.size(); ++i) flat = flat * axes_[i].size + index[i];
    return mass_[flat];
  }

  /// Marginal over `keep`, axes in the order given.
  JointDist marginal(const AxisSet& keep) const {
    std::vector<std::size_t> pos;
    std::vector<Axis> out_axes;
    for (const auto& name : keep) {
      pos.push_back(axis_index(name));
      out_axes.push_back(axes_[pos.back()]);
    }
    std::vector<double> out(product_size(out_axes), 0.0);
    accumulate_into(pos, out_axes, out);
    JointDist result;
    result.axes_ = std::move(out_axes);
    result.mass_ = std::move(out);
    return result;
  }

  /// Entropy in bits of the marginal over `axes` (empty set has entropy 0).
  double marginal_entropy(const AxisSet& names) const {
    if (names.empty()) return 0.0;
    JointDist m = marginal(names);
    double h = 0.0;
    for (double p : m.mass_) h -= xlog2x(p);
    return h;
  }

 private:
  static std::size_t product_size(const std::vector<Axis>& axes) {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size;
    return n;
  }

  void accumulate_into(const std::vector<std::size_t>& pos, const std::vector<Axis>& out_axes,
                       std::vector<double>& out) const {
    std::vector<std::size_t> coord(axes_.size(), 0);
    for (std::size_t flat = 0; flat < mass_.size(); ++flat) {
      std::size_t o = 0;
      for (std::size_t k = 0; k < pos.size(); ++k) o = o * out_axes[k].size + coord[pos[k]];
      out[o] += mass_[flat];
      for (std::size_t d = axes_.size(); d-- > 0;) {
        if (++coord[d] < axes_[d].size) break;
        coord[d] = 0;
      }
    }
  }

  std::vector<Axis> axes_;
  std::vector<double> mass_;
};

namespace detail {

inline void require_disjoint(std::initializer_list<const AxisSet*> sets) {
  std::vector<std::string> seen;
  for (const AxisSet* s : sets)
    for (const auto& name : *s) {
      if (std::find(seen.begin(), seen.end(), name) != seen.end())
        throw ArgumentError("axis '" + name + "' appears in more than one argument set");
      seen.push_back(name);
    }
}

inline AxisSet join(std::initializer_list<const AxisSet*> sets) {
  AxisSet out;
  for (const AxisSet* s : sets) out.insert(out.end(), s->begin(), s->end());
  return out;
}

inline void require_axes(const JointDist& d, const AxisSet& names) {
  for (const auto& n : names) (void)d.axis_index(n);
}

}  // namespace detail

/// H(targets | given) in bits, with 0 log 0 = 0.
inline double entropy(const JointDist& d, const AxisSet& targets, const AxisSet& given = {}) {
  detail::require_axes(d, targets);
  detail::require_axes(d, given);
  detail::require_disjoint({&targets, &given});
  return d.marginal_entropy(detail::join({&targets, &given})) - d.marginal_entropy(given);
}

/// I(a; b | given) in bits. Round-off negatives down to -1e-9 are clamped to 0.
inline double mutual_information(const JointDist& d, const AxisSet& a, const AxisSet& b, const AxisSet& given = {}) {
  detail::require_axes(d, a);
  detail::require_axes(d, b);
  detail::require_axes(d, given);
  detail::require_disjoint({&a, &b, &given});
  double i = d.marginal_entropy(detail::join({&a, &given})) + d.marginal_entropy(detail::join({&b, &given})) -
             d.marginal_entropy(detail::join({&a, &b, &given})) - d.marginal_entropy(given);
  if (i < 0.0 && i > -kNormTol) i = 0.0;
  return i;
}

/// Conditional pmf p(targets | given). Rows for zero-probability conditioning
/// events are uniform.
struct Conditional {
  std::vector<Axis> given;
  std::vector<Axis> targets;
  std::vector<double> table;  // [given_flat * target_cells + target_flat]

  std::size_t given_cells() const {
    std::size_t n = 1;
    for (const auto& a : given) n *= a.size;
    return n;
  }
  std::size_t target_cells() const {
    std::size_t n = 1;
    for (const auto& a : targets) n *= a.size;
    return n;
  }
  std::span<const double> row(std::size_t given_flat) const {
    return std::span<const double>(table).subspan(given_flat * target_cells(), target_cells());
  }
};

inline Conditional condition(const JointDist& d, const AxisSet& targets, const AxisSet& given) {
  detail::require_disjoint({&targets, &given});
  JointDist m = d.marginal(detail::join({&given, &targets}));
  Conditional c;
  for (const auto& n : given) c.given.push_back(Axis{n, d.axis_size(n)});
  for (const auto& n : targets) c.targets.push_back(Axis{n, d.axis_size(n)});
  std::size_t rows = c.given_cells(), cols = c.target_cells();
  c.table.assign(rows * cols, 0.0);
  auto mass = m.mass();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t k = 0; k < cols; ++k) total += mass[r * cols + k];
    for (std::size_t k = 0; k < cols; ++k)
      c.table[r * cols + k] = total > 0.0 ? mass[r * cols + k] / total : 1.0 / static_cast<double>(cols);
  }
  return c;
}

/// Joint over base's axes followed by factor's targets: base(b) * factor(targets | given(b)).
/// factor.given must name axes of base.
inline JointDist compose(const JointDist& base, const Conditional& factor) {
  std::vector<std::size_t> given_pos;
  for (const auto& a : factor.given) {
    given_pos.push_back(base.axis_index(a.name));
    if (base.axes()[given_pos.back()].size != a.size) throw ArgumentError("axis '" + a.name + "' size mismatch");
  }
  for (const auto& a : factor.targets)
    if (base.has_axis(a.name)) throw AxisError("factor target '" + a.name + "' already in base");
  std::vector<Axis> axes = base.axes();
  axes.insert(axes.end(), factor.targets.begin(), factor.targets.end());
  std::size_t cols = factor.target_cells();
  std::vector<double> mass(base.cells() * cols);
  const auto& base_axes = base.axes();
  std::vector<std::size_t> coord(base_axes.size(), 0);
  for (std::size_t flat = 0; flat < base.cells(); ++flat) {
    std::size_t g = 0;
    for (std::size_t k = 0; k < given_pos.size(); ++k) g = g * factor.given[k].size + coord[given_pos[k]];
    auto row = factor.row(g);
    for (std::size_t t = 0; t < cols; ++t) mass[flat * cols + t] = base.mass()[flat] * row[t];
    for (std::size_t d = base_axes.size(); d-- > 0;) {
      if (++coord[d] < base_axes[d].size) break;
      coord[d] = 0;
    }
  }
  return JointDist(std::move(axes), std::move(mass));
}

/// Payoff pi(x, y, z) per symbol, row-major [x][y][z].
class PayoffTensor {
 public:
  PayoffTensor() = default;
  PayoffTensor(std::size_t nx, std::size_t ny, std::size_t nz, std::vector<double> values)
      : nx_(nx), ny_(ny), nz_(nz), values_(std::move(values)) {
    if (nx == 0 || ny == 0 || nz == 0) throw ArgumentError("payoff alphabets must be nonempty");
    if (values_.size() != nx * ny * nz) throw ArgumentError("payoff tensor shape mismatch");
    for (double v : values_)
      if (!std::isfinite(v)) throw ArgumentError("payoff entries must be finite");
  }

  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nz() const noexcept { return nz_; }
  double operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return values_[(x * ny_ + y) * nz_ + z];
  }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<double> values_;
};

/// Sum over (x, y, u) of p(x, y, u) * pi(x, y, zmap(u)).
inline double expected_payoff(const JointDist& joint_xyu, const PayoffTensor& pi, std::span<const int> zmap) {
  JointDist m = joint_xyu.marginal({"X", "Y", "U"});
  std::size_t nx = m.axes()[0].size, ny = m.axes()[1].size, nu = m.axes()[2].size;
  if (nx != pi.nx() || ny != pi.ny()) throw ArgumentError("joint and payoff alphabets differ");
  if (zmap.size() != nu) throw ArgumentError("zmap must be total on U");
  double total = 0.0;
  auto mass = m.mass();
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t u = 0; u < nu; ++u) {
        auto z = static_cast<std::size_t>(zmap[u]);
        if (z >= pi.nz()) throw ArgumentError("zmap entry out of range");
        total += mass[(x * ny + y) * nu + u] * pi(x, y, z);
      }
  return total;
}

/// Builds a single-axis pmf; validates normalization.
inline JointDist make_pmf(std::string name, std::vector<double> p) {
  std::size_t n = p.size();
  return JointDist({Axis{std::move(name), n}}, std::move(p));
}

}  // namespace keyfoil

#endif  // KEYFOIL_PROBCORE_HPP
