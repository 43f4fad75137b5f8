#include <gtest/gtest.h>

#include "exhaustive.hpp"
#include "keyfoil/adversim.hpp"
#include "keyfoil/errors.hpp"
#include "keyfoil/instance.hpp"
#include "test_util.hpp"

using namespace keyfoil;
using keyfoil::testing::random_markov_target;

namespace {

std::vector<double> source_of(const JointDist& t) {
  const JointDist m_dist = t.marginal({"X"});
  auto m = m_dist.mass();
  return {m.begin(), m.end()};
}

CodebookSpec tiny_spec(const JointDist& t, std::size_t n, std::uint64_t seed) {
  CodebookSpec s;
  s.n = n;
  s.rate_u = 0.5;
  s.rate_v = 0.5;
  s.rate_key = 0.5;
  s.target = t;
  s.seed = seed;
  return s;
}

constexpr AdversaryModel kModels[] = {AdversaryModel::FullCausal, AdversaryModel::PastActionsOnly,
                                      AdversaryModel::PastSourceOnly, AdversaryModel::MessageOnly};

}  // namespace

TEST(View, HidesWhatTheModelForbids) {
  std::vector<Symbol> x{1, 0, 1}, y{0, 0, 1}, z{1, 1};
  auto full = make_view(AdversaryModel::FullCausal, 3, 4, x, y, z);
  EXPECT_EQ(full.step(), 2u);
  EXPECT_EQ(*full.xs, (std::vector<Symbol>{1, 0}));
  EXPECT_EQ(*full.ys, (std::vector<Symbol>{0, 0}));
  auto actions = make_view(AdversaryModel::PastActionsOnly, 3, 4, x, y, z);
  EXPECT_FALSE(actions.xs.has_value());
  EXPECT_TRUE(actions.ys.has_value());
  auto source = make_view(AdversaryModel::PastSourceOnly, 3, 4, x, y, z);
  EXPECT_TRUE(source.xs.has_value());
  EXPECT_FALSE(source.ys.has_value());
  auto blind = make_view(AdversaryModel::MessageOnly, 3, 4, x, y, z);
  EXPECT_FALSE(blind.xs || blind.ys);
  EXPECT_EQ(blind.zs, z);
  EXPECT_EQ(blind.j1, 3u);
  EXPECT_EQ(blind.j2, 4u);
}

TEST(ArgminAction, TiesGoToSmallestAction) {
  auto mp = matching_pennies();
  std::vector<double> even{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(argmin_action(even, mp.pi), 0);
  std::vector<double> x1{0.0, 0.0, 0.3, 0.7};
  EXPECT_EQ(argmin_action(x1, mp.pi), 1);
  std::vector<double> nearly{0.25 + 1e-14, 0.25, 0.25 - 1e-14, 0.25};
  EXPECT_EQ(argmin_action(nearly, mp.pi), 0);
}

TEST(ExactAdversary, TableMatchesEncoder) {
  JointDist t = random_markov_target(3, 2, 2, 2, 2);
  Codebook cb(make_spec(t, 6, 4));
  ExactAdversary adv(cb, random_instance(1).pi, source_of(t));
  for (std::uint64_t k = 0; k < cb.key_count(); k += 3)
    for (std::uint64_t id = 0; id < 64; id += 5) {
      auto w = adv.x_word(id);
      Encoding a = adv.encoding(k, id), b = encode(w, k, cb);
      EXPECT_EQ(a.j1, b.j1);
      EXPECT_EQ(a.j2, b.j2);
      EXPECT_EQ(a.fallback, b.fallback);
      for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(adv.x_digit(id, i), w[i]);
    }
}

TEST(ExactAdversary, PosteriorIsNormalized) {
  JointDist t = random_markov_target(4, 2, 2, 2, 2);
  Codebook cb(make_spec(t, 4, 2));
  ExactAdversary adv(cb, random_instance(2).pi, source_of(t));
  for (AdversaryModel m : kModels) {
    std::vector<Symbol> x{0, 1, 1}, y{1, 1, 0}, z{0, 0};
    auto post = adv.posterior(make_view(m, 0, 0, x, y, z));
    double s = 0.0;
    for (double p : post) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  AdversaryView late;
  late.zs.assign(4, 0);
  EXPECT_THROW(adv.posterior(late), ArgumentError);
}

TEST(ExactAdversary, Guard) {
  JointDist t = random_markov_target(5, 2, 2, 2, 2);
  CodebookSpec s = tiny_spec(t, 16, 1);
  s.rate_key = 0.4;  // 2^7 keys times 2^16 words
  Codebook cb(s);
  EXPECT_THROW(ExactAdversary(cb, random_instance(3).pi, source_of(t)), GuardError);
}

TEST(ExactAdversary, MatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    JointDist t = random_markov_target(100 + seed, 2, 2, 2, 2);
    ProblemInstance prob = random_instance(200 + seed);
    for (std::size_t n : {1, 2}) {
      Codebook cb(tiny_spec(t, n, seed));
      auto src = source_of(t);
      ExactAdversary adv(cb, prob.pi, src);
      auto outs = keyfoil::testing::enumerate_outcomes(cb, src);
      for (AdversaryModel m : kModels) {
        double exact = keyfoil::testing::strategy_value(outs, adv.strategy(), m, prob.pi);
        auto best = keyfoil::testing::exhaustive_min(outs, m, prob.pi);
        EXPECT_NEAR(exact, best.value, 1e-9) << "seed " << seed << " n " << n;
      }
    }
  }
}

TEST(ExactAdversary, NeverWorseThanSimplerAttacks) {
  JointDist t = random_markov_target(7, 2, 2, 2, 2);
  ProblemInstance prob = random_instance(8);
  Codebook cb(tiny_spec(t, 2, 3));
  auto src = source_of(t);
  ExactAdversary adv(cb, prob.pi, src);
  auto outs = keyfoil::testing::enumerate_outcomes(cb, src);
  auto zmap = inner_best_response(t.marginal({"X", "Y", "U"}), prob.pi).zmap;
  double exact = keyfoil::testing::strategy_value(outs, adv.strategy(), AdversaryModel::FullCausal, prob.pi);
  double single = keyfoil::testing::strategy_value(outs, single_letter_attack(cb, zmap), AdversaryModel::FullCausal, prob.pi);
  double blind = keyfoil::testing::strategy_value(outs, blind_attack(best_blind_action(t, prob.pi)),
                                                  AdversaryModel::FullCausal, prob.pi);
  EXPECT_LE(exact, single + 1e-12);
  EXPECT_LE(exact, blind + 1e-12);
}

TEST(Attacks, Shapes) {
  JointDist t = random_markov_target(9, 2, 2, 3, 2);
  Codebook cb(make_spec(t, 4, 1));
  EXPECT_THROW(single_letter_attack(cb, {0, 1}), ArgumentError);
  EXPECT_THROW(blind_attack(300), ArgumentError);
  auto s = single_letter_attack(cb, {1, 0, 1});
  AdversaryView v;
  v.j1 = 1;
  v.zs = {0};
  EXPECT_EQ(s(v), cb.u_symbol(1, 1) == 1 ? 0 : 1);
  EXPECT_EQ(blind_attack(1)(v), 1);
  EXPECT_EQ(best_blind_action(JointDist({{"X", 2}, {"Y", 2}}, {0.0, 0.0, 0.2, 0.8}), matching_pennies().pi), 1);
}
