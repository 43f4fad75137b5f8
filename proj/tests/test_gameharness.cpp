#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "keyfoil/gameharness.hpp"
#include "keyfoil/instance.hpp"
#include "test_util.hpp"

using namespace keyfoil;

namespace {

/// X uniform binary, U = X, Y = U, V constant.
JointDist identity_target() {
  return JointDist({{"X", 2}, {"Y", 2}, {"U", 2}, {"V", 1}}, {0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5});
}

/// X uniform binary, U constant, V = X, Y = V.
JointDist full_encryption_target() {
  return JointDist({{"X", 2}, {"Y", 2}, {"U", 1}, {"V", 2}}, {0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5});
}

const std::vector<double> kUniform{0.5, 0.5};

}  // namespace

TEST(PlayBlock, HandTraceAtBlocklengthOne) {
  Codebook cb(make_spec(identity_target(), 1, 4));
  ProblemInstance mp = matching_pennies();
  bool has_one = false;
  for (std::uint64_t j = 0; j < cb.u_count(); ++j) has_one = has_one || cb.u_symbol(j, 0) == 1;
  ASSERT_TRUE(has_one);

  std::vector<double> point{0.0, 1.0};
  TrialStreams rng = TrialStreams::for_trial(9, 0);
  GameTrace t = play_block(standard_scheme(cb), {blind_attack(0), AdversaryModel::FullCausal}, point, mp.pi, rng);
  EXPECT_EQ(t.x_seq, std::vector<Symbol>{1});
  EXPECT_EQ(cb.u_symbol(t.j1, 0), 1);
  EXPECT_EQ(t.y_seq, std::vector<Symbol>{1});
  EXPECT_EQ(t.z_seq, std::vector<Symbol>{0});
  ASSERT_EQ(t.payoffs.size(), 1u);
  EXPECT_DOUBLE_EQ(t.payoffs[0], 2.0);
  // A single letter is never within eps of a 1/2 frequency.
  EXPECT_TRUE(t.encoder_fallback);
  EXPECT_LT(t.k, cb.key_count());
}

TEST(PlayBlock, ConstantPayoff) {
  ProblemInstance c = constant_payoff_instance(0.7, 2, 2, 2);
  Codebook cb(make_spec(keyfoil::testing::random_markov_target(3, 2, 2, 2, 2), 6, 1));
  TrialStreams rng = TrialStreams::for_trial(1, 0);
  GameTrace t = play_block(standard_scheme(cb), {blind_attack(1), AdversaryModel::FullCausal}, kUniform, c.pi, rng);
  for (double p : t.payoffs) EXPECT_DOUBLE_EQ(p, 0.7);
  EXPECT_DOUBLE_EQ(trace_mean(t), 0.7);

  PayoffStats st = estimate_value(standard_scheme(cb), {blind_attack(1), AdversaryModel::FullCausal}, kUniform, c.pi, 100, 3);
  EXPECT_DOUBLE_EQ(st.mean, 0.7);
  EXPECT_EQ(st.std_error, 0.0);
}

TEST(PlayBlock, RejectsMismatchedAlphabets) {
  Codebook cb(make_spec(identity_target(), 2, 1));
  ProblemInstance big = constant_payoff_instance(1.0, 3, 2, 2);
  TrialStreams rng = TrialStreams::for_trial(1, 0);
  EXPECT_THROW(play_block(standard_scheme(cb), {blind_attack(0), AdversaryModel::FullCausal},
                          std::vector<double>{0.3, 0.3, 0.4}, big.pi, rng),
               ArgumentError);
}

TEST(PlayBlock, ProtocolFidelity) {
  JointDist t = keyfoil::testing::random_markov_target(8, 2, 2, 2, 2);
  Codebook cb(make_spec(t, 5, 2));
  ProblemInstance prob = random_instance(8);
  for (AdversaryModel model : {AdversaryModel::FullCausal, AdversaryModel::PastActionsOnly,
                               AdversaryModel::PastSourceOnly, AdversaryModel::MessageOnly}) {
    std::vector<AdversaryView> views;
    struct Call {
      std::uint64_t j1, j2, k;
      std::size_t i;
    };
    std::vector<Call> calls;
    Scheme s = standard_scheme(cb);
    Decoder inner = s.decoder;
    s.decoder = [&](std::uint64_t j1, std::uint64_t j2, std::uint64_t k, std::size_t i, Stream& r) {
      calls.push_back({j1, j2, k, i});
      return inner(j1, j2, k, i, r);
    };
    Adversary adv{[&](const AdversaryView& v) {
                    views.push_back(v);
                    return static_cast<Symbol>(v.step() % 2);
                  },
                  model};
    TrialStreams rng = TrialStreams::for_trial(5, 1);
    GameTrace tr = play_block(s, adv, prob.p0, prob.pi, rng);
    ASSERT_EQ(views.size(), cb.n());
    ASSERT_EQ(calls.size(), cb.n());
    for (std::size_t i = 0; i < cb.n(); ++i) {
      EXPECT_EQ(calls[i].j1, tr.j1);
      EXPECT_EQ(calls[i].j2, tr.j2);
      EXPECT_EQ(calls[i].k, tr.k);
      EXPECT_EQ(calls[i].i, i);
      const AdversaryView& v = views[i];
      EXPECT_EQ(v.step(), i);
      EXPECT_EQ(v.j1, tr.j1);
      EXPECT_EQ(v.j2, tr.j2);
      EXPECT_EQ(v.zs, std::vector<Symbol>(tr.z_seq.begin(), tr.z_seq.begin() + i));
      EXPECT_EQ(v.xs.has_value(), sees_source(model));
      EXPECT_EQ(v.ys.has_value(), sees_actions(model));
      if (v.xs) {
        EXPECT_EQ(*v.xs, std::vector<Symbol>(tr.x_seq.begin(), tr.x_seq.begin() + i));
      }
      if (v.ys) {
        EXPECT_EQ(*v.ys, std::vector<Symbol>(tr.y_seq.begin(), tr.y_seq.begin() + i));
      }
    }
  }
}

TEST(PlayBlock, FullEncryptionAgainstBlind) {
  ProblemInstance mp = matching_pennies();
  JointDist t = full_encryption_target();
  Codebook cb(make_spec(t, 8, 11));
  Adversary blind{blind_attack(best_blind_action(t, mp.pi)), AdversaryModel::FullCausal};
  PayoffStats st = estimate_value(standard_scheme(cb), blind, kUniform, mp.pi, 10000, 21);
  // A fallback block can lose at most one unit per step.
  EXPECT_LE(st.mean, 1.5 + 0.03);
  EXPECT_GE(st.mean, 1.5 - 0.03 - st.fallback_rate);
}

TEST(EstimateValue, SeedDeterminism) {
  ProblemInstance mp = matching_pennies();
  Codebook cb(make_spec(keyfoil::testing::random_markov_target(12, 2, 2, 2, 2), 6, 1));
  Adversary adv{single_letter_attack(cb, {0, 1}), AdversaryModel::FullCausal};
  PayoffStats a = estimate_value(standard_scheme(cb), adv, kUniform, mp.pi, 300, 77);
  PayoffStats b = estimate_value(standard_scheme(cb), adv, kUniform, mp.pi, 300, 77);
  PayoffStats c = estimate_value(standard_scheme(cb), adv, kUniform, mp.pi, 300, 78);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.per_step_means, b.per_step_means);
  EXPECT_EQ(a.fallback_rate, b.fallback_rate);
  EXPECT_NE(a.mean, c.mean);
}

TEST(EstimateValue, StatsInvariants) {
  ProblemInstance prob = random_instance(31);
  Codebook cb(make_spec(keyfoil::testing::random_markov_target(31, 2, 2, 2, 2), 7, 3));
  Adversary adv{blind_attack(1), AdversaryModel::MessageOnly};
  auto traces = play_blocks(standard_scheme(cb), adv, prob.p0, prob.pi, 500, 4);
  PayoffStats st = summarize(traces);
  double sum = 0.0, fb = 0.0;
  for (const auto& t : traces) {
    sum += trace_mean(t);
    fb += t.encoder_fallback ? 1.0 : 0.0;
  }
  double mean = sum / 500.0;
  EXPECT_NEAR(st.mean, mean, 1e-12);
  double ss = 0.0;
  for (const auto& t : traces) ss += (trace_mean(t) - mean) * (trace_mean(t) - mean);
  EXPECT_NEAR(st.std_error, std::sqrt(ss / 499.0) / std::sqrt(500.0), 1e-12);
  EXPECT_DOUBLE_EQ(st.fallback_rate, fb / 500.0);
  ASSERT_EQ(st.per_step_means.size(), 7u);
  double step_avg = 0.0;
  for (double v : st.per_step_means) step_avg += v / 7.0;
  EXPECT_NEAR(step_avg, st.mean, 1e-12);
}

TEST(EstimateValue, TooFewTrials) {
  ProblemInstance mp = matching_pennies();
  Codebook cb(make_spec(identity_target(), 2, 1));
  EXPECT_THROW(estimate_value(standard_scheme(cb), {blind_attack(0), AdversaryModel::FullCausal}, kUniform, mp.pi, 99, 1),
               ArgumentError);
}

TEST(EstimateValue, StdErrorScalesAsInverseRoot) {
  ProblemInstance mp = matching_pennies();
  Codebook cb(make_spec(full_encryption_target(), 6, 2));
  Adversary adv{blind_attack(0), AdversaryModel::FullCausal};
  PayoffStats small = estimate_value(standard_scheme(cb), adv, kUniform, mp.pi, 1000, 5);
  PayoffStats big = estimate_value(standard_scheme(cb), adv, kUniform, mp.pi, 4000, 6);
  ASSERT_GT(big.std_error, 0.0);
  EXPECT_NEAR(small.std_error / big.std_error, 2.0, 0.4);
}

TEST(EstimateValue, OrderingOnMatchedSeeds) {
  ProblemInstance mp = matching_pennies(0.5, 1.0);
  SolverConfig cfg;
  cfg.restarts = 16;
  SolveResult res = solve_theorem1(mp, 3, 2, cfg);
  JointDist target = scheme_target(res);
  Codebook cb(make_spec(target, 8, 101));
  ExactAdversary exact(cb, mp.pi, mp.p0);
  const std::size_t trials = 1500;
  auto te = play_blocks(table_scheme(exact), {exact.strategy(), AdversaryModel::FullCausal}, mp.p0, mp.pi, trials, 7);
  auto ts = play_blocks(standard_scheme(cb),
                        {single_letter_attack(cb, inner_best_response(target.marginal({"X", "Y", "U"}), mp.pi).zmap),
                         AdversaryModel::FullCausal},
                        mp.p0, mp.pi, trials, 7);
  auto tb = play_blocks(standard_scheme(cb), {blind_attack(best_blind_action(target, mp.pi)), AdversaryModel::FullCausal},
                        mp.p0, mp.pi, trials, 7);
  for (std::size_t t = 0; t < trials; ++t) {
    ASSERT_EQ(te[t].x_seq, ts[t].x_seq);
    ASSERT_EQ(te[t].k, ts[t].k);
    ASSERT_EQ(te[t].j1, ts[t].j1);
    ASSERT_EQ(te[t].j2, ts[t].j2);
    ASSERT_EQ(te[t].y_seq, ts[t].y_seq);
    ASSERT_EQ(te[t].y_seq, tb[t].y_seq);
  }
  PayoffStats e = summarize(te), s = summarize(ts), b = summarize(tb);
  EXPECT_LE(e.mean, s.mean + 2.0 * std::hypot(e.std_error, s.std_error));
  EXPECT_LE(s.mean, b.mean + 2.0 * std::hypot(s.std_error, b.std_error));
}

TEST(Discontinuity, MatchingPennies) {
  DiscontinuityProbe p = discontinuity_probe(matching_pennies(), 0.01, 1.0);
  EXPECT_NEAR(p.thm4_value, 1.5, 0.02);
  EXPECT_NEAR(p.zero_key_value, 1.0, 1e-6);
  EXPECT_NEAR(p.gap, 0.5, 0.02);
}

TEST(Discontinuity, ConstantPayoffHasNoGap) {
  DiscontinuityProbe p = discontinuity_probe(constant_payoff_instance(0.4, 2, 2, 2), 0.01, 1.0, Mode::lossless);
  EXPECT_NEAR(p.gap, 0.0, 1e-9);
  DiscontinuityProbe q = discontinuity_probe(constant_payoff_instance(0.4, 2, 2, 2), 0.01, 0.5, Mode::thm1, 2, 2);
  EXPECT_NEAR(q.gap, 0.0, 1e-9);
}

TEST(Discontinuity, GapNonNegative) {
  SolverConfig cfg;
  cfg.restarts = 16;
  for (std::uint64_t seed = 50; seed < 54; ++seed) {
    DiscontinuityProbe p = discontinuity_probe(random_instance(seed), 0.05, 0.6, Mode::thm1, 2, 2, cfg);
    EXPECT_GE(p.gap, -1e-6) << "seed " << seed;
  }
}

TEST(Discontinuity, RejectsBadArguments) {
  EXPECT_THROW(discontinuity_probe(matching_pennies(), 0.0, 1.0), ArgumentError);
  EXPECT_THROW(discontinuity_probe(matching_pennies(), 0.1, 1.0, Mode::thm3), ArgumentError);
}

TEST(GapSearch, ConstantInstanceHasNoGaps) {
  GapRow g = gap_row(constant_payoff_instance(0.3, 2, 2, 2), 0, 0.5);
  EXPECT_NEAR(g.gap_private, 0.0, 1e-9);
  EXPECT_NEAR(g.gap_key, 0.0, 1e-9);
}

TEST(GapSearch, MatchingPenniesSaturates) {
  GapRow g = gap_row(matching_pennies(), 0, 1.0);
  EXPECT_NEAR(g.baseline, 1.5, 0.02);
  EXPECT_NEAR(g.thm1_rr, 1.5, 0.02);
  EXPECT_NEAR(g.gap_private, 0.0, 0.02);
  EXPECT_GE(g.gap_key, -0.02);
}

TEST(GapSearch, ReportSchemaAndOrder) {
  SolverConfig cfg;
  cfg.restarts = 8;
  std::vector<std::uint64_t> seeds{3, 4, 5, 6};
  auto rows = gap_search(seeds, 0.5, 2, 2, cfg);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(rows[i - 1].gap_private, rows[i].gap_private);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.gap_private, r.thm1_rr - r.baseline, 1e-12);
    EXPECT_NEAR(r.gap_key, r.thm1_2rr - r.thm1_rr, 1e-12);
    EXPECT_GE(r.gap_key, -0.02);
  }

  std::ostringstream os;
  write_gap_report(os, rows);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "seed,instance,thm1_rr,baseline,thm1_2rr,gap_private,gap_key");
  std::size_t n = 0;
  while (std::getline(in, line)) {
    auto a = line.find(",\""), b = line.rfind("\",");
    ASSERT_NE(a, std::string::npos);
    std::string inner = line.substr(a + 2, b - a - 2), unq;
    for (std::size_t i = 0; i < inner.size(); ++i) {
      unq += inner[i];
      if (inner[i] == '"') ++i;
    }
    ProblemFile f = parse_problem(unq);
    EXPECT_EQ(f.prob.nx(), 2u);
    EXPECT_EQ(std::stoull(line.substr(0, a)), rows[n].seed);
    ++n;
  }
  EXPECT_EQ(n, rows.size());
}

TEST(GapSearch, EmptySeedList) {
  std::vector<std::uint64_t> none;
  EXPECT_TRUE(gap_search(none, 0.5).empty());
  std::ostringstream os;
  write_gap_report(os, {});
  EXPECT_EQ(os.str(), "seed,instance,thm1_rr,baseline,thm1_2rr,gap_private,gap_key\n");
}
