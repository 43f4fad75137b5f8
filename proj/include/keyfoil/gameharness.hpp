#ifndef KEYFOIL_GAMEHARNESS_HPP
#define KEYFOIL_GAMEHARNESS_HPP

// Monte Carlo play of whole blocks and the comparative experiments built on it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "keyfoil/adversim.hpp"
#include "keyfoil/coordcode.hpp"
#include "keyfoil/errors.hpp"
#include "keyfoil/instance.hpp"
#include "keyfoil/parallel.hpp"
#include "keyfoil/problem_file.hpp"
#include "keyfoil/region.hpp"
#include "keyfoil/rng.hpp"

namespace keyfoil {

inline constexpr std::size_t kMinTrials = 100;

using Encoder = std::function<Encoding(std::span<const Symbol> x, std::uint64_t k)>;
/// y_i from (j1, j2, k, i) and a private stream.
using Decoder = std::function<Symbol(std::uint64_t j1, std::uint64_t j2, std::uint64_t k, std::size_t i, Stream& rng)>;

struct Scheme {
  const Codebook* codebook = nullptr;
  Encoder encoder;
  Decoder decoder;
};

/// Typicality encoder and memoryless decoder over `cb`.
inline Scheme standard_scheme(const Codebook& cb) {
  return {&cb, [&cb](std::span<const Symbol> x, std::uint64_t k) { return encode(x, k, cb); },
          [&cb](std::uint64_t j1, std::uint64_t j2, std::uint64_t k, std::size_t i, Stream& rng) {
            return decode_step(cb, j1, j2, k, i, rng);
          }};
}

/// Same scheme, with the encoder read from the adversary's precomputed table.
inline Scheme table_scheme(const ExactAdversary& adv) {
  Scheme s = standard_scheme(adv.codebook());
  s.encoder = [&adv](std::span<const Symbol> x, std::uint64_t k) {
    std::uint64_t id = 0;
    for (Symbol c : x) id = id * adv.codebook().nx() + c;
    return adv.encoding(k, id);
  };
  return s;
}

struct Adversary {
  Strategy strategy;
  AdversaryModel model = AdversaryModel::FullCausal;
};

/// Per-trial streams. Y and Z never share randomness.
struct TrialStreams {
  Stream key, source, decoder;

  static TrialStreams for_trial(std::uint64_t seed, std::uint64_t trial) {
    return {Stream(seed, "game-key", {trial}), Stream(seed, "game-source", {trial}),
            Stream(seed, "game-decoder", {trial})};
  }
};

/// One block: key, then the source word, then the message; at each step the
/// receiver and the adversary act from their own views, and only afterwards
/// are x_i, y_i, z_i revealed.
inline GameTrace play_block(const Scheme& scheme, const Adversary& adversary, std::span<const double> source,
                            const PayoffTensor& pi, TrialStreams& rng) {
  const Codebook& cb = *scheme.codebook;
  if (source.size() != cb.nx() || pi.nx() != cb.nx() || pi.ny() != cb.ny())
    throw ArgumentError("scheme, source and payoff alphabets disagree");
  const std::size_t n = cb.n();
  GameTrace t;
  t.k = rng.key.below(cb.key_count());
  t.x_seq.resize(n);
  for (auto& x : t.x_seq) x = static_cast<Symbol>(rng.source.categorical(source));
  Encoding e = scheme.encoder(t.x_seq, t.k);
  t.j1 = e.j1;
  t.j2 = e.j2;
  t.encoder_fallback = e.fallback;
  t.y_seq.reserve(n);
  t.z_seq.reserve(n);
  t.payoffs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Symbol y = scheme.decoder(t.j1, t.j2, t.k, i, rng.decoder);
    AdversaryView view = make_view(adversary.model, t.j1, t.j2, std::span<const Symbol>(t.x_seq).first(i),
                                   std::span<const Symbol>(t.y_seq).first(i), t.z_seq);
    Symbol z = adversary.strategy(view);
    if (y >= pi.ny() || z >= pi.nz()) throw ArgumentError("action out of range");
    t.y_seq.push_back(y);
    t.z_seq.push_back(z);
    t.payoffs.push_back(pi(t.x_seq[i], y, z));
  }
  return t;
}

inline double trace_mean(const GameTrace& t) {
  return t.payoffs.empty() ? 0.0 : pairwise_sum(t.payoffs) / static_cast<double>(t.payoffs.size());
}

/// `trials` blocks, trial t driven by TrialStreams::for_trial(seed, t).
inline std::vector<GameTrace> play_blocks(const Scheme& scheme, const Adversary& adversary,
                                          std::span<const double> source, const PayoffTensor& pi,
                                          std::size_t trials, std::uint64_t seed) {
  std::vector<GameTrace> traces(trials);
  parallel_for(trials, [&](std::size_t t) {
    TrialStreams rng = TrialStreams::for_trial(seed, t);
    traces[t] = play_block(scheme, adversary, source, pi, rng);
  });
  return traces;
}

struct PayoffStats {
  std::size_t trials = 0;
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(trials); "stderr" is a libc macro
  std::vector<double> per_step_means;
  double fallback_rate = 0.0;
};

inline PayoffStats summarize(std::span<const GameTrace> traces) {
  if (traces.size() < 2) throw ArgumentError("need at least two traces");
  PayoffStats s;
  s.trials = traces.size();
  const double m = static_cast<double>(traces.size());
  std::vector<double> means(traces.size()), fb(traces.size());
  for (std::size_t t = 0; t < traces.size(); ++t) {
    means[t] = trace_mean(traces[t]);
    fb[t] = traces[t].encoder_fallback ? 1.0 : 0.0;
  }
  s.mean = pairwise_sum(means) / m;
  // Shifted by the first sample so that identical samples give exactly zero.
  std::vector<double> d(means.size()), d2(means.size());
  for (std::size_t t = 0; t < means.size(); ++t) {
    d[t] = means[t] - means[0];
    d2[t] = d[t] * d[t];
  }
  double sd = pairwise_sum(d);
  double var = std::max(0.0, (pairwise_sum(d2) - sd * sd / m) / (m - 1.0));
  s.std_error = std::sqrt(var) / std::sqrt(m);
  s.fallback_rate = pairwise_sum(fb) / m;
  const std::size_t n = traces[0].payoffs.size();
  s.per_step_means.resize(n);
  std::vector<double> col(traces.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < traces.size(); ++t) col[t] = traces[t].payoffs.at(i);
    s.per_step_means[i] = pairwise_sum(col) / m;
  }
  return s;
}

inline PayoffStats estimate_value(const Scheme& scheme, const Adversary& adversary, std::span<const double> source,
                                  const PayoffTensor& pi, std::size_t trials, std::uint64_t seed) {
  if (trials < kMinTrials) throw ArgumentError("estimate_value needs at least " + std::to_string(kMinTrials) + " trials");
  auto traces = play_blocks(scheme, adversary, source, pi, trials, seed);
  return summarize(traces);
}

struct DiscontinuityProbe {
  double thm4_value = 0.0;       // message-only adversary at r0_small
  double zero_key_value = 0.0;   // causal adversary without key
  double gap = 0.0;
};

/// Compares the message-only program at a small key rate with the
/// causal-adversary program (thm1 or lossless) at no key, both at rate r.
inline DiscontinuityProbe discontinuity_probe(const ProblemInstance& prob, double r0_small, double r,
                                              Mode zero_key_mode = Mode::lossless, std::size_t card_u = 0,
                                              std::size_t card_v = 0, const SolverConfig& cfg = {}) {
  if (!(r0_small > 0.0)) throw ArgumentError("r0_small must be positive");
  if (zero_key_mode != Mode::thm1 && zero_key_mode != Mode::lossless)
    throw ArgumentError("zero-key side must be thm1 or lossless");
  if (card_u == 0) card_u = default_cardinality(prob);
  if (card_v == 0) card_v = default_cardinality(prob);
  DiscontinuityProbe out;
  out.thm4_value = solve_theorem4(prob.with_rates(r0_small, r), cfg).value;
  out.zero_key_value = solve(prob.with_rates(0.0, r), zero_key_mode, card_u, card_v, cfg).value;
  out.gap = out.thm4_value - out.zero_key_value;
  return out;
}

struct GapRow {
  std::uint64_t seed = 0;
  ProblemInstance instance;
  double thm1_rr = 0.0;
  double baseline = 0.0;
  double thm1_2rr = 0.0;
  double gap_private = 0.0;  // thm1(r, r) - baseline(r)
  double gap_key = 0.0;      // thm1(2r, r) - thm1(r, r)
};

/// Both gaps on one instance at rate r. thm1(r, r) is warm-started from the
/// private-channel optimum and thm1(2r, r) from thm1(r, r).
inline GapRow gap_row(const ProblemInstance& instance, std::uint64_t seed, double r, std::size_t card_u = 2,
                      std::size_t card_v = 2, const SolverConfig& cfg = {}) {
  if (!(r >= 0.0)) throw ArgumentError("rate must be nonnegative");
  GapRow g;
  g.seed = seed;
  g.instance = instance.with_rates(r, r);
  SolveResult base = solve_theorem4(g.instance.with_rates(1.0, r), cfg);
  g.baseline = base.value;
  SolverConfig c1 = cfg;
  c1.warm_starts.push_back(base.joint);
  SolveResult rr = solve_theorem1(g.instance, card_u, card_v, c1);
  g.thm1_rr = rr.value;
  SolverConfig c2 = cfg;
  if (rr.status != SolveStatus::infeasible_cardinality) c2.warm_starts.push_back(rr.joint);
  g.thm1_2rr = solve_theorem1(g.instance.with_rates(2.0 * r, r), card_u, card_v, c2).value;
  g.gap_private = g.thm1_rr - g.baseline;
  g.gap_key = g.thm1_2rr - g.thm1_rr;
  return g;
}

inline void sort_gap_rows(std::vector<GapRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const GapRow& a, const GapRow& b) { return a.gap_private > b.gap_private; });
}

/// Binary random instances, one per seed; rows sorted by gap_private, largest first.
inline std::vector<GapRow> gap_search(std::span<const std::uint64_t> seeds, double r, std::size_t card_u = 2,
                                      std::size_t card_v = 2, const SolverConfig& cfg = {}) {
  std::vector<GapRow> rows;
  rows.reserve(seeds.size());
  for (std::uint64_t seed : seeds) rows.push_back(gap_row(random_instance(seed, 2, 2, 2), seed, r, card_u, card_v, cfg));
  sort_gap_rows(rows);
  return rows;
}

/// CSV with columns seed, instance (compact JSON), thm1_rr, baseline, thm1_2rr,
/// gap_private, gap_key.
inline void write_gap_report(std::ostream& os, std::span<const GapRow> rows, int precision = 6) {
  os << "seed,instance,thm1_rr,baseline,thm1_2rr,gap_private,gap_key\n";
  for (const auto& g : rows) {
    std::string inst = instance_to_json(g.instance).dump();
    std::string quoted;
    for (char c : inst) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    os << g.seed << ",\"" << quoted << "\"," << format_real(g.thm1_rr, precision) << ','
       << format_real(g.baseline, precision) << ',' << format_real(g.thm1_2rr, precision) << ','
       << format_real(g.gap_private, precision) << ',' << format_real(g.gap_key, precision) << '\n';
  }
}

}  // namespace keyfoil

#endif  // KEYFOIL_GAMEHARNESS_HPP
