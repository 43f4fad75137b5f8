#include <gtest/gtest.h>

#include <cmath>

#include "keyfoil/coordcode.hpp"
#include "keyfoil/errors.hpp"
#include "keyfoil/instance.hpp"
#include "keyfoil/region.hpp"
#include "test_util.hpp"

using namespace keyfoil;
using keyfoil::testing::random_markov_target;

namespace {

/// X uniform binary, U = X, |V| = 1, Y = X.
JointDist identity_target() {
  return JointDist({{"X", 2}, {"Y", 2}, {"U", 2}, {"V", 1}}, {0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5});
}

/// X uniform binary, U constant, V = X, Y = X.
JointDist full_encryption_target() {
  return JointDist({{"X", 2}, {"Y", 2}, {"U", 1}, {"V", 2}}, {0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5});
}

CodebookSpec spec_with(JointDist t, std::size_t n, double ru, double rv, double rk, std::uint64_t seed = 3) {
  CodebookSpec s;
  s.n = n;
  s.rate_u = ru;
  s.rate_v = rv;
  s.rate_key = rk;
  s.target = std::move(t);
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Codebook, SizeArithmetic) {
  Codebook cb = build_codebook(spec_with(random_markov_target(1, 2, 2, 2, 2), 4, 1.0, 0.0, 0.5));
  EXPECT_EQ(cb.u_count(), 16u);
  EXPECT_EQ(cb.v_count(), 1u);
  EXPECT_EQ(cb.key_count(), 4u);
  EXPECT_EQ(index_bits(12, 0.6), 8u);
  EXPECT_EQ(index_bits(10, 0.3), 3u);
  EXPECT_THROW(index_bits(100, 0.5), GuardError);
}

TEST(Codebook, SingleLetterAuxiliaryGivesIdenticalWords) {
  Codebook cb(spec_with(random_markov_target(2, 2, 2, 1, 2), 6, 0.5, 0.5, 0.5));
  for (std::uint64_t j = 1; j < cb.u_count(); ++j)
    EXPECT_TRUE(std::equal(cb.u_word(0).begin(), cb.u_word(0).end(), cb.u_word(j).begin()));
}

TEST(Codebook, RegenerationIsBitIdentical) {
  auto s = spec_with(random_markov_target(3, 2, 3, 3, 2), 8, 0.5, 0.5, 0.5, 77);
  Codebook a(s), b(s);
  for (std::uint64_t j = 0; j < a.u_count(); ++j)
    EXPECT_TRUE(std::equal(a.u_word(j).begin(), a.u_word(j).end(), b.u_word(j).begin()));
  for (std::uint64_t j2 = 0; j2 < a.v_count(); ++j2)
    for (std::uint64_t k = 0; k < a.key_count(); ++k) EXPECT_EQ(a.v_word(1, j2, k), b.v_word(1, j2, k));
  Codebook c(spec_with(s.target, 8, 0.5, 0.5, 0.5, 78));
  bool differ = false;
  for (std::uint64_t j = 0; j < a.u_count(); ++j)
    differ = differ || !std::equal(a.u_word(j).begin(), a.u_word(j).end(), c.u_word(j).begin());
  EXPECT_TRUE(differ);
}

TEST(Codebook, LetterFrequenciesFollowTarget) {
  JointDist t = random_markov_target(4, 2, 2, 3, 2);
  Codebook cb(spec_with(t, 16, 0.9, 0.0, 0.0));
  std::vector<double> freq(3, 0.0);
  for (std::uint64_t j = 0; j < cb.u_count(); ++j)
    for (Symbol s : cb.u_word(j)) freq[s] += 1.0;
  const JointDist pu_dist = t.marginal({"U"});
  auto pu = pu_dist.mass();
  double total = static_cast<double>(cb.u_count() * cb.n());
  for (std::size_t u = 0; u < 3; ++u) EXPECT_NEAR(freq[u] / total, pu[u], 4.0 * std::sqrt(0.25 / total));
}

TEST(Codebook, MemoryGuard) {
  EXPECT_THROW(Codebook(spec_with(random_markov_target(5, 2, 2, 2, 2), 30, 0.9, 0.0, 0.0)), GuardError);
}

TEST(Codebook, TargetValidation) {
  auto bad = JointDist({{"X", 2}, {"Y", 2}, {"U", 1}, {"V", 1}}, {0.5, 0.0, 0.0, 0.5});
  EXPECT_THROW(checked_target(bad), ArgumentError);  // Y depends on X beyond (U, V)
  EXPECT_THROW(checked_target(JointDist({{"X", 2}, {"Y", 1}}, {0.5, 0.5})), AxisError);
  JointDist ok = random_markov_target(6, 3, 2, 2, 2);
  EXPECT_NO_THROW(checked_target(ok.marginal({"V", "U", "Y", "X"})));
}

TEST(Spec, RateAccounting) {
  const double delta = 0.1;
  for (std::uint64_t s = 0; s < 10; ++s) {
    JointDist t = random_markov_target(10 + s, 2, 2, 2, 2);
    double r = mutual_information(t, {"X"}, {"U", "V"});
    for (std::size_t n : {4, 8, 12}) {
      CodebookSpec sp = make_spec(t, n, 1, delta);
      unsigned b1 = index_bits(n, sp.rate_u), b2 = index_bits(n, sp.rate_v), bk = index_bits(n, sp.rate_key);
      EXPECT_LE(b1 + b2, static_cast<double>(n) * (r + 2.0 * delta) + 2.0);
      EXPECT_EQ(bk, static_cast<unsigned>(std::ceil(n * (mutual_information(t, {"X", "Y"}, {"V"}, {"U"}) + delta) - 1e-9)));
    }
  }
}

TEST(Encode, DegenerateAuxiliaries) {
  auto t = JointDist({{"X", 2}, {"Y", 2}, {"U", 1}, {"V", 1}}, {0.25, 0.25, 0.25, 0.25});
  Codebook cb(make_spec(t, 4, 1));
  std::vector<Symbol> x{0, 1, 1, 0};
  for (std::uint64_t k = 0; k < cb.key_count(); ++k) {
    Encoding e = encode(x, k, cb);
    EXPECT_EQ(e.j1, 0u);
    EXPECT_EQ(e.j2, 0u);
    EXPECT_FALSE(e.fallback);
  }
}

TEST(Encode, ExactMatchWins) {
  Codebook cb(make_spec(identity_target(), 6, 5));
  bool tested = false;
  for (std::uint64_t j = 0; j < cb.u_count() && !tested; ++j) {
    auto w = cb.u_word(j);
    if (std::count(w.begin(), w.end(), Symbol{1}) != 3) continue;
    std::vector<Symbol> x(w.begin(), w.end());
    std::uint64_t first = j;
    for (std::uint64_t i = 0; i < j; ++i)
      if (std::equal(w.begin(), w.end(), cb.u_word(i).begin())) first = std::min(first, i);
    Encoding e = encode(x, 0, cb);
    EXPECT_EQ(e.j1, first);
    EXPECT_FALSE(e.fallback);
    tested = true;
  }
  EXPECT_TRUE(tested);
}

TEST(Encode, TypicalUWordWhenNoFallback) {
  JointDist t = random_markov_target(21, 2, 2, 2, 2);
  Codebook cb(make_spec(t, 10, 2, kDefaultDelta, 0.3));
  Stream src(8, "src", {});
  const JointDist px_dist = t.marginal({"X"});
  auto px = px_dist.mass();
  int clean = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Symbol> x(cb.n());
    for (auto& s : x) s = static_cast<Symbol>(src.categorical(px));
    Encoding e = encode(x, trial % cb.key_count(), cb);
    if (e.fallback) continue;
    ++clean;
    std::vector<double> counts(4, 0.0);
    for (std::size_t i = 0; i < cb.n(); ++i) counts[cb.u_symbol(e.j1, i) * 2 + x[i]] += 1.0;
    for (std::size_t u = 0; u < 2; ++u)
      for (std::size_t a = 0; a < 2; ++a) {
        double p = cb.p_ux(u, a);
        EXPECT_LE(std::abs(counts[u * 2 + a] / cb.n() - p), 0.3 * p + 0.3 / 4 + 1e-12);
      }
  }
  EXPECT_GT(clean, 0);
}

TEST(Encode, RejectsBadInput) {
  Codebook cb(make_spec(identity_target(), 4, 1));
  std::vector<Symbol> short_x{0, 1};
  std::vector<Symbol> bad_x{0, 1, 2, 0};
  std::vector<Symbol> x{0, 1, 1, 0};
  EXPECT_THROW(encode(short_x, 0, cb), ArgumentError);
  EXPECT_THROW(encode(bad_x, 0, cb), ArgumentError);
  EXPECT_THROW(encode(x, cb.key_count(), cb), ArgumentError);
}

TEST(Decode, DeterministicChannelIgnoresStream) {
  Codebook cb(make_spec(full_encryption_target(), 6, 2));
  Stream a(1, "a", {}), b(2, "b", {});
  for (std::uint64_t k = 0; k < cb.key_count(); ++k)
    for (std::size_t i = 0; i < cb.n(); ++i)
      EXPECT_EQ(decode_step(cb, 0, 1 % cb.v_count(), k, i, a), decode_step(cb, 0, 1 % cb.v_count(), k, i, b));
}

TEST(Decode, UniformChannelFrequencies) {
  auto t = JointDist({{"X", 1}, {"Y", 3}, {"U", 1}, {"V", 1}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  Codebook cb(make_spec(t, 1, 1));
  Stream s(4, "decode", {});
  std::vector<double> c(3, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) c[decode_step(cb, 0, 0, 0, 0, s)] += 1.0;
  double sigma = std::sqrt(draws * (1.0 / 3) * (2.0 / 3));
  for (double v : c) EXPECT_NEAR(v, draws / 3.0, 3.0 * sigma);
}

TEST(Decode, FullEncryptionReproducesSource) {
  Codebook cb(make_spec(full_encryption_target(), 8, 9));
  Stream src(3, "src", {}), dec(4, "dec", {});
  std::vector<double> half{0.5, 0.5};
  int clean = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Symbol> x(8);
    for (auto& s : x) s = static_cast<Symbol>(src.categorical(half));
    std::uint64_t k = trial % cb.key_count();
    Encoding e = encode(x, k, cb);
    if (e.fallback) continue;
    ++clean;
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(decode_step(cb, e.j1, e.j2, k, i, dec), x[i]);
  }
  EXPECT_GT(clean, 0);
}

TEST(Decode, RangeChecks) {
  Codebook cb(make_spec(full_encryption_target(), 4, 1));
  Stream s;
  EXPECT_THROW(decode_step(cb, 0, 0, 0, 4, s), ArgumentError);
  EXPECT_THROW(decode_step(cb, cb.u_count(), 0, 0, 0, s), ArgumentError);
}

TEST(Coordination, IidTracesConverge) {
  JointDist t = random_markov_target(30, 2, 2, 2, 2);
  const JointDist pxy_dist = t.marginal({"X", "Y"});
  auto pxy = pxy_dist.mass();
  Stream s(5, "iid", {});
  std::vector<GameTrace> traces(1000);
  for (auto& tr : traces)
    for (int i = 0; i < 11; ++i) {
      std::size_t c = s.categorical(pxy);
      tr.x_seq.push_back(static_cast<Symbol>(c / 2));
      tr.y_seq.push_back(static_cast<Symbol>(c % 2));
    }
  auto st = coordination_test(traces, t);
  EXPECT_LE(st.single_l1, 0.05);
  EXPECT_LE(st.pair_l1, 0.05);
}

TEST(Coordination, PointMassIsExact) {
  auto t = JointDist({{"X", 2}, {"Y", 2}, {"U", 1}, {"V", 1}}, {0.0, 0.0, 0.0, 1.0});
  Codebook cb(make_spec(t, 5, 1));
  std::vector<GameTrace> traces(100);
  Stream dec(1, "d", {});
  std::vector<Symbol> x(5, 1);
  for (auto& tr : traces) {
    Encoding e = encode(x, 0, cb);
    ASSERT_FALSE(e.fallback);
    tr.x_seq = x;
    for (std::size_t i = 0; i < 5; ++i) tr.y_seq.push_back(decode_step(cb, e.j1, e.j2, 0, i, dec));
  }
  auto st = coordination_test(traces, t);
  EXPECT_EQ(st.single_l1, 0.0);
  EXPECT_EQ(st.pair_l1, 0.0);
}

TEST(Coordination, NeedsEnoughTraces) {
  std::vector<GameTrace> few(99);
  EXPECT_THROW(coordination_test(few, identity_target()), ArgumentError);
}

TEST(SchemeTarget, RoutesActionsThroughSecondLayer) {
  SolveResult r = solve_lossless(matching_pennies(1.0, 1.0), 2);
  JointDist t = scheme_target(r);
  EXPECT_NEAR(entropy(t, {"X"}, {"V"}), 0.0, 1e-12);
  EXPECT_NO_THROW(checked_target(t));
  SolveResult r4 = solve_theorem4(matching_pennies(0.5, 1.0));
  EXPECT_NEAR(entropy(scheme_target(r4), {"Y"}, {"V"}), 0.0, 1e-12);
}
