// keyfoil: batch front end for the region solvers, the oracle and the game simulator.
//
//   keyfoil region   FILE --mode thm1 [--oracle]
//   keyfoil sweep    FILE --r0-grid 0,0.5,1 --r-grid 0.5,1 --mode thm1 [--out f.csv]
//   keyfoil simulate FILE --n 8 --trials 2000 --adversary exact [--seed 7]
//   keyfoil gapsearch --count 200 --seed 1 --rate 0.5 [--out gaps.csv]
//
// Exit codes: 0 ok, 2 input error, 3 infeasible, 4 resource guard.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "keyfoil/adversim.hpp"
#include "keyfoil/coordcode.hpp"
#include "keyfoil/errors.hpp"
#include "keyfoil/gameharness.hpp"
#include "keyfoil/oracle.hpp"
#include "keyfoil/problem_file.hpp"
#include "keyfoil/region.hpp"

namespace {

using namespace keyfoil;
using nlohmann::json;

constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitGuard = 4;

int g_precision = 6;

double R(double v) { return round_significant(v, g_precision); }

ProblemFile load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ParseError("bad grid value '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw ParseError("bad grid value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

SolverConfig solver_config(const SolverOptions& o) {
  SolverConfig c;
  if (o.seed) c.seed = *o.seed;
  if (o.restarts) c.restarts = *o.restarts;
  if (o.thm3_constraint) c.thm3_constraint = *o.thm3_constraint;
  return c;
}

std::pair<std::size_t, std::size_t> cards(const ProblemFile& f) {
  std::size_t d = default_cardinality(f.prob);
  return {f.solver.card_u.value_or(d), f.solver.card_v.value_or(d)};
}

AdversaryModel model_for(Mode m) {
  switch (m) {
    case Mode::thm2: return AdversaryModel::PastActionsOnly;
    case Mode::thm3: return AdversaryModel::PastSourceOnly;
    case Mode::thm4: return AdversaryModel::MessageOnly;
    default: return AdversaryModel::FullCausal;
  }
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw ParseError("cannot write " + path);
  return file;
}

int cmd_region(const std::string& path, const std::string& mode_name, bool oracle) {
  ProblemFile f = load(path);
  Mode mode = parse_mode(mode_name);
  auto [cu, cv] = cards(f);
  SolverConfig cfg = solver_config(f.solver);
  SolveResult res = solve(f.prob, mode, cu, cv, cfg);
  json rec = {{"mode", std::string(to_string(mode))},
              {"value", R(res.value)},
              {"key_rate_used", R(res.key_rate_used)},
              {"msg_rate_used", R(res.msg_rate_used)},
              {"status", std::string(to_string(res.status))},
              {"restarts", res.restarts_run},
              {"card_u", res.card_u},
              {"card_v", res.card_v}};
  if (oracle) {
    int m = f.solver.resolution.value_or(24);
    double o = oracle_grid(f.prob, mode, res.card_u, res.card_v, m, cfg.thm3_constraint);
    rec["oracle"] = R(o);
    rec["oracle_resolution"] = m;
    rec["abs_diff"] = R(std::abs(res.value - o));
  }
  std::cout << rec.dump() << '\n';
  return 0;
}

int cmd_sweep(const std::string& path, const std::string& r0_grid, const std::string& r_grid,
              const std::string& mode_name, const std::string& out) {
  ProblemFile f = load(path);
  Mode mode = parse_mode(mode_name);
  auto r0s = parse_grid(r0_grid), rs = parse_grid(r_grid);
  for (double v : r0s)
    if (!(v >= 0.0)) throw ParseError("rates must be nonnegative");
  for (double v : rs)
    if (!(v >= 0.0)) throw ParseError("rates must be nonnegative");
  auto [cu, cv] = cards(f);
  auto rows = sweep(f.prob, r0s, rs, mode, cu, cv, solver_config(f.solver));
  std::ofstream file;
  std::ostream& os = open_out(out, file);
  os << "r0,r,value,status,restarts\n";
  for (const auto& row : rows)
    os << format_real(row.r0, g_precision) << ',' << format_real(row.r, g_precision) << ','
       << format_real(row.value, g_precision) << ',' << to_string(row.status) << ',' << row.restarts << '\n';
  return 0;
}

int cmd_simulate(const std::string& path, const std::string& mode_name, std::size_t n, std::size_t trials,
                 const std::string& adversary, std::uint64_t seed) {
  ProblemFile f = load(path);
  Mode mode = parse_mode(mode_name);
  auto [cu, cv] = cards(f);
  SolveResult res = solve(f.prob, mode, cu, cv, solver_config(f.solver));
  if (res.status == SolveStatus::infeasible_cardinality) throw InfeasibleError("solver found no feasible target");
  JointDist target = scheme_target(res);
  Codebook cb(make_spec(target, n, seed, f.solver.delta.value_or(kDefaultDelta), f.solver.eps.value_or(kDefaultEps)));
  AdversaryModel model = model_for(mode);

  std::optional<ExactAdversary> exact;
  Scheme scheme = standard_scheme(cb);
  Adversary adv{nullptr, model};
  if (adversary == "exact") {
    exact.emplace(cb, f.prob.pi, f.prob.p0);
    scheme = table_scheme(*exact);
    adv.strategy = exact->strategy();
  } else if (adversary == "single") {
    adv.strategy = single_letter_attack(cb, inner_best_response(target.marginal({"X", "Y", "U"}), f.prob.pi).zmap);
  } else {
    adv.strategy = blind_attack(best_blind_action(target, f.prob.pi));
  }
  PayoffStats st = estimate_value(scheme, adv, f.prob.p0, f.prob.pi, trials, seed);
  json steps = json::array();
  for (double v : st.per_step_means) steps.push_back(R(v));
  json rec = {{"mode", std::string(to_string(mode))},
              {"adversary", adversary},
              {"n", n},
              {"trials", st.trials},
              {"seed", seed},
              {"mean", R(st.mean)},
              {"stderr", R(st.std_error)},
              {"fallback_rate", R(st.fallback_rate)},
              {"per_step_means", steps},
              {"target_value", R(res.value)}};
  std::cout << rec.dump() << '\n';
  return 0;
}

int cmd_gapsearch(std::size_t count, std::uint64_t seed, double rate, const std::string& out) {
  if (!(rate >= 0.0)) throw ParseError("rate must be nonnegative");
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), seed);
  auto rows = gap_search(seeds, rate);
  std::ofstream file;
  write_gap_report(open_out(out, file), rows, g_precision);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keyfoil: secrecy value of key-assisted coordination"};
  app.require_subcommand(1);
  app.add_option("--precision", g_precision, "significant digits of printed reals")->check(CLI::Range(1, 17));

  std::string file, mode = "thm1", out, r0_grid, r_grid, adversary = "exact";
  bool oracle = false;
  std::size_t n = 8, trials = 2000, count = 200;
  std::uint64_t seed = 1;
  double rate = 0.5;

  auto* region = app.add_subcommand("region", "solve one region program");
  region->add_option("file", file, "problem file")->required();
  region->add_option("--mode", mode)->check(CLI::IsMember({"thm1", "thm2", "thm3", "thm4", "lossless"}));
  region->add_flag("--oracle", oracle, "also run the grid oracle");

  auto* sw = app.add_subcommand("sweep", "solve on a rate grid, CSV out");
  sw->add_option("file", file, "problem file")->required();
  sw->add_option("--r0-grid", r0_grid, "comma separated key rates")->required();
  sw->add_option("--r-grid", r_grid, "comma separated message rates")->required();
  sw->add_option("--mode", mode)->check(CLI::IsMember({"thm1", "thm2", "thm3", "thm4", "lossless"}));
  sw->add_option("--out", out, "CSV path (stdout if omitted)");

  auto* sim = app.add_subcommand("simulate", "play the coded game");
  sim->add_option("file", file, "problem file")->required();
  sim->add_option("--mode", mode)->check(CLI::IsMember({"thm1", "thm2", "thm3", "thm4", "lossless"}));
  sim->add_option("--n", n, "blocklength")->check(CLI::Range(1, 64));
  sim->add_option("--trials", trials)->check(CLI::PositiveNumber);
  sim->add_option("--adversary", adversary)->check(CLI::IsMember({"exact", "single", "blind"}));
  sim->add_option("--seed", seed);

  auto* gap = app.add_subcommand("gapsearch", "random-instance gap report, CSV out");
  gap->add_option("--count", count);
  gap->add_option("--seed", seed);
  gap->add_option("--rate", rate);
  gap->add_option("--out", out, "CSV path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*region) return cmd_region(file, mode, oracle);
    if (*sw) return cmd_sweep(file, r0_grid, r_grid, mode, out);
    if (*sim) return cmd_simulate(file, mode, n, trials, adversary, seed);
    if (*gap) return cmd_gapsearch(count, seed, rate, out);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const GuardError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return kExitGuard;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
