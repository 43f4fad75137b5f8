#ifndef KEYFOIL_PROBLEM_FILE_HPP
#define KEYFOIL_PROBLEM_FILE_HPP

// JSON problem files:
//
//   {
//     "alphabet": {"x": 2, "y": 2, "z": 2},
//     "source": [0.5, 0.5],
//     "payoff": [[[x0y0z0, x0y0z1], ...], ...],     // [x][y][z]
//     "rates": {"r0": 0.5, "r": 1.0},
//     "solver": {"cards": {"u": 3, "v": 2}, "seeds": 7, "restarts": 64,
//                "resolution": 24, "thm3_constraint": "IXYgU",
//                "eps": 0.15, "delta": 0.1}           // optional, every key optional
//   }
//
// Unknown keys are rejected at every level.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "keyfoil/errors.hpp"
#include "keyfoil/instance.hpp"
#include "keyfoil/region.hpp"

namespace keyfoil {

struct SolverOptions {
  std::optional<std::size_t> card_u;
  std::optional<std::size_t> card_v;
  std::optional<std::uint64_t> seed;
  std::optional<int> restarts;
  std::optional<int> resolution;
  std::optional<Thm3Constraint> thm3_constraint;
  std::optional<double> eps;
  std::optional<double> delta;
};

struct ProblemFile {
  ProblemInstance prob;
  SolverOptions solver;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw ParseError(std::string(where) + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto k : known) ok = ok || it.key() == k;
    if (!ok) throw ParseError("unknown field '" + it.key() + "' in " + std::string(where));
  }
}

inline const json& require(const json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("missing field '" + std::string(key) + "' in " + std::string(where));
  return *it;
}

inline double number(const json& v, std::string_view what) {
  if (!v.is_number()) throw ParseError(std::string(what) + " must be a number");
  return v.get<double>();
}

inline std::size_t positive_int(const json& v, std::string_view what) {
  if (!v.is_number_integer() || v.get<long long>() < 1) throw ParseError(std::string(what) + " must be a positive integer");
  return static_cast<std::size_t>(v.get<long long>());
}

}  // namespace detail

inline ProblemFile parse_problem(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  detail::reject_unknown(doc, "problem", {"alphabet", "source", "payoff", "rates", "solver"});

  const json& alpha = detail::require(doc, "alphabet", "problem");
  detail::reject_unknown(alpha, "alphabet", {"x", "y", "z"});
  std::size_t nx = detail::positive_int(detail::require(alpha, "x", "alphabet"), "alphabet.x");
  std::size_t ny = detail::positive_int(detail::require(alpha, "y", "alphabet"), "alphabet.y");
  std::size_t nz = detail::positive_int(detail::require(alpha, "z", "alphabet"), "alphabet.z");
  if (nx > 255 || ny > 255 || nz > 255) throw ParseError("alphabets are limited to 255 letters");

  const json& src = detail::require(doc, "source", "problem");
  if (!src.is_array() || src.size() != nx) throw ParseError("source must be an array of alphabet.x numbers");
  std::vector<double> p0;
  for (const auto& v : src) p0.push_back(detail::number(v, "source entry"));

  const json& pay = detail::require(doc, "payoff", "problem");
  std::vector<double> values;
  if (!pay.is_array() || pay.size() != nx) throw ParseError("payoff must be nested [x][y][z] arrays");
  for (const auto& px : pay) {
    if (!px.is_array() || px.size() != ny) throw ParseError("payoff must be nested [x][y][z] arrays");
    for (const auto& py : px) {
      if (!py.is_array() || py.size() != nz) throw ParseError("payoff must be nested [x][y][z] arrays");
      for (const auto& v : py) values.push_back(detail::number(v, "payoff entry"));
    }
  }

  const json& rates = detail::require(doc, "rates", "problem");
  detail::reject_unknown(rates, "rates", {"r0", "r"});

  ProblemFile f;
  try {
    f.prob = ProblemInstance{std::move(p0), PayoffTensor(nx, ny, nz, std::move(values)),
                             detail::number(detail::require(rates, "r0", "rates"), "rates.r0"),
                             detail::number(detail::require(rates, "r", "rates"), "rates.r")};
    f.prob.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }

  if (auto it = doc.find("solver"); it != doc.end()) {
    const json& s = *it;
    detail::reject_unknown(s, "solver", {"cards", "seeds", "restarts", "resolution", "thm3_constraint", "eps", "delta"});
    if (auto c = s.find("cards"); c != s.end()) {
      detail::reject_unknown(*c, "solver.cards", {"u", "v"});
      if (c->contains("u")) f.solver.card_u = detail::positive_int((*c)["u"], "solver.cards.u");
      if (c->contains("v")) f.solver.card_v = detail::positive_int((*c)["v"], "solver.cards.v");
    }
    if (auto v = s.find("seeds"); v != s.end()) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
        throw ParseError("solver.seeds must be a nonnegative integer");
      f.solver.seed = v->get<std::uint64_t>();
    }
    if (auto v = s.find("restarts"); v != s.end())
      f.solver.restarts = static_cast<int>(detail::positive_int(*v, "solver.restarts"));
    if (auto v = s.find("resolution"); v != s.end())
      f.solver.resolution = static_cast<int>(detail::positive_int(*v, "solver.resolution"));
    if (auto v = s.find("thm3_constraint"); v != s.end()) {
      if (!v->is_string()) throw ParseError("solver.thm3_constraint must be a string");
      try {
        f.solver.thm3_constraint = parse_thm3_constraint(v->get<std::string>());
      } catch (const ArgumentError& e) {
        throw ParseError(e.what());
      }
    }
    if (auto v = s.find("eps"); v != s.end()) {
      f.solver.eps = detail::number(*v, "solver.eps");
      if (!(*f.solver.eps > 0.0)) throw ParseError("solver.eps must be positive");
    }
    if (auto v = s.find("delta"); v != s.end()) {
      f.solver.delta = detail::number(*v, "solver.delta");
      if (!(*f.solver.delta >= 0.0)) throw ParseError("solver.delta must be nonnegative");
    }
  }
  return f;
}

/// `v` with `digits` significant digits, shortest form ("nan" for NaN).
inline std::string format_real(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

/// `v` rounded to `digits` significant digits, for JSON records.
inline double round_significant(double v, int digits = 6) {
  if (!std::isfinite(v)) return v;
  return std::stod(format_real(v, digits));
}

inline nlohmann::json instance_to_json(const ProblemInstance& prob) {
  nlohmann::json pay = nlohmann::json::array();
  for (std::size_t x = 0; x < prob.nx(); ++x) {
    nlohmann::json px = nlohmann::json::array();
    for (std::size_t y = 0; y < prob.ny(); ++y) {
      nlohmann::json py = nlohmann::json::array();
      for (std::size_t z = 0; z < prob.nz(); ++z) py.push_back(prob.pi(x, y, z));
      px.push_back(std::move(py));
    }
    pay.push_back(std::move(px));
  }
  return {{"alphabet", {{"x", prob.nx()}, {"y", prob.ny()}, {"z", prob.nz()}}},
          {"source", prob.p0},
          {"payoff", std::move(pay)},
          {"rates", {{"r0", prob.r0}, {"r", prob.r}}}};
}

inline nlohmann::json problem_to_json(const ProblemFile& f) {
  nlohmann::json j = instance_to_json(f.prob);
  nlohmann::json s = nlohmann::json::object();
  if (f.solver.card_u || f.solver.card_v) {
    s["cards"] = nlohmann::json::object();
    if (f.solver.card_u) s["cards"]["u"] = *f.solver.card_u;
    if (f.solver.card_v) s["cards"]["v"] = *f.solver.card_v;
  }
  if (f.solver.seed) s["seeds"] = *f.solver.seed;
  if (f.solver.restarts) s["restarts"] = *f.solver.restarts;
  if (f.solver.resolution) s["resolution"] = *f.solver.resolution;
  if (f.solver.thm3_constraint) s["thm3_constraint"] = std::string(to_string(*f.solver.thm3_constraint));
  if (f.solver.eps) s["eps"] = *f.solver.eps;
  if (f.solver.delta) s["delta"] = *f.solver.delta;
  if (!s.empty()) j["solver"] = std::move(s);
  return j;
}

}  // namespace keyfoil

#endif  // KEYFOIL_PROBLEM_FILE_HPP
