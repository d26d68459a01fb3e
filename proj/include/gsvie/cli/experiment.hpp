#pragma once

// Strict JSON experiment configuration. Unknown keys and wrong types are
// rejected with a message naming the offending field.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsvie/coefficients.hpp"
#include "gsvie/gcore.hpp"

namespace gsvie::cli {

using Json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  struct G {
    double sigma_low = 1.0;
    double sigma_high = 1.0;
    bool operator==(const G&) const = default;
  } g;
  struct Grid {
    double horizon = 1.0;
    std::size_t steps = 100;
    bool operator==(const Grid&) const = default;
  } grid;
  struct Lattice {
    std::size_t levels = 2;
    std::size_t pieces = 1;
    std::size_t cap = kDefaultLatticeCap;
    bool operator==(const Lattice&) const = default;
  } lattice;
  struct MonteCarlo {
    std::size_t replicas = 1000;
    std::uint64_t master_seed = 1;
    bool operator==(const MonteCarlo&) const = default;
  } monte_carlo;
  struct Problem {
    std::string family = "zero";
    FamilyParams params;
    std::optional<std::string> hypothesis_class;
    std::map<std::string, double> witnesses;  // L, L_bar, eps, eps_bar
    bool operator==(const Problem&) const = default;
  } problem;
  struct Solver {
    std::string mode = "direct";
    double tol = 1e-10;
    std::size_t max_iter = 0;  // 0 means N
    bool fast_path = false;
    bool operator==(const Solver&) const = default;
  } solver;
  struct Study {
    std::string kind = "solve";
    double alpha = 0.0;
    std::string payoff = "B_T^2";
    double constant = 0.0;
    bool lower = false;
    std::vector<double> alphas;
    std::string process = "B";
    double p = 4.0;
    double eps_prime = 1.0;
    std::string inject;
    bool operator==(const Study&) const = default;
  } study;
  struct Output {
    std::string directory = "gsvie-out";
    bool operator==(const Output&) const = default;
  } output;

  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::set<std::string>& study_kinds() {
  static const std::set<std::string> k{"solve", "expect", "converge", "sweep", "holder", "verify"};
  return k;
}

inline const std::set<std::string>& payoff_names() {
  static const std::set<std::string> k{"B_T", "B_T^2", "QV_T", "constant", "X_T", "X_T^2"};
  return k;
}

namespace detail {

inline void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
  }
}

inline double get_number(const Json& obj, const std::string& where, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v.get<double>();
}

inline std::uint64_t get_unsigned(const Json& obj, const std::string& where, const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(where + "." + key + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline bool get_bool(const Json& obj, const std::string& where, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(where + "." + key + " must be true or false");
  return v.get<bool>();
}

inline std::string get_string(const Json& obj, const std::string& where, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
  return v.get<std::string>();
}

inline std::map<std::string, double> get_number_map(const Json& obj, const std::string& where, const char* key) {
  std::map<std::string, double> out;
  if (!obj.contains(key)) return out;
  const Json& v = obj.at(key);
  if (!v.is_object()) throw ConfigError(where + "." + key + " must be an object of numbers");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.value().is_boolean()) {
      out[it.key()] = it.value().get<bool>() ? 1.0 : 0.0;
    } else if (it.value().is_number()) {
      out[it.key()] = it.value().get<double>();
    } else {
      throw ConfigError(where + "." + key + "." + it.key() + " must be a number");
    }
  }
  return out;
}

}  // namespace detail

/// Checks every precondition that can be checked without running anything.
inline void validate(const ExperimentConfig& c) {
  try {
    GParams(c.g.sigma_low, c.g.sigma_high);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(c.grid.horizon > 0.0)) throw ConfigError("grid.horizon must be > 0");
  if (c.grid.steps < 1) throw ConfigError("grid.steps must be >= 1");
  if (c.lattice.levels < 1) throw ConfigError("lattice.levels must be >= 1");
  if (c.lattice.pieces < 1 || c.lattice.pieces > c.grid.steps)
    throw ConfigError("lattice.pieces must satisfy 1 <= pieces <= grid.steps");
  if (c.lattice.cap < 1) throw ConfigError("lattice.cap must be >= 1");
  if (c.monte_carlo.replicas < 1) throw ConfigError("monte_carlo.replicas must be >= 1");
  if (c.solver.mode != "direct" && c.solver.mode != "picard")
    throw ConfigError("solver.mode must be 'direct' or 'picard'");
  if (!(c.solver.tol > 0.0)) throw ConfigError("solver.tol must be > 0");
  if (!study_kinds().count(c.study.kind)) throw ConfigError("study.kind '" + c.study.kind + "' is not a known study");
  if (c.study.kind == "expect" && !payoff_names().count(c.study.payoff))
    throw ConfigError("study.payoff '" + c.study.payoff + "' is not a known payoff");
  if (c.study.kind == "sweep" && c.study.alphas.size() < 2) throw ConfigError("study.alphas needs at least two values");
  if (c.study.kind == "holder") {
    if (c.study.process != "B" && c.study.process != "X") throw ConfigError("study.process must be 'B' or 'X'");
    if (!(c.study.p >= 1.0)) throw ConfigError("study.p must be >= 1");
  }
  if (c.study.kind == "verify" && !c.study.inject.empty() && c.study.inject != "lipschitz-violation")
    throw ConfigError("study.inject must be empty or 'lipschitz-violation'");
  if (c.problem.hypothesis_class) {
    try {
      hypothesis_class_from_string(*c.problem.hypothesis_class);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("problem.hypothesis_class: ") + e.what());
    }
  }
  for (const auto& [k, v] : c.problem.witnesses)
    if (k != "L" && k != "L_bar" && k != "eps" && k != "eps_bar")
      throw ConfigError("unknown key 'problem.witnesses." + k + "'");
  try {
    builtin_family(c.problem.family, c.problem.params, c.grid.horizon);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
}

inline ExperimentConfig config_from_json(const Json& j) {
  using namespace detail;
  check_keys(j, "config", {"g", "grid", "lattice", "monte_carlo", "problem", "solver", "study", "output"});
  ExperimentConfig c;
  const Json empty = Json::object();
  const auto section = [&](const char* k) -> const Json& { return j.contains(k) ? j.at(k) : empty; };

  const Json& g = section("g");
  check_keys(g, "g", {"sigma_low", "sigma_high"});
  c.g.sigma_low = get_number(g, "g", "sigma_low", c.g.sigma_low);
  c.g.sigma_high = get_number(g, "g", "sigma_high", c.g.sigma_high);

  const Json& gr = section("grid");
  check_keys(gr, "grid", {"horizon", "steps"});
  c.grid.horizon = get_number(gr, "grid", "horizon", c.grid.horizon);
  c.grid.steps = get_unsigned(gr, "grid", "steps", c.grid.steps);

  const Json& la = section("lattice");
  check_keys(la, "lattice", {"levels", "pieces", "cap"});
  c.lattice.levels = get_unsigned(la, "lattice", "levels", c.lattice.levels);
  c.lattice.pieces = get_unsigned(la, "lattice", "pieces", c.lattice.pieces);
  c.lattice.cap = get_unsigned(la, "lattice", "cap", c.lattice.cap);

  const Json& mc = section("monte_carlo");
  check_keys(mc, "monte_carlo", {"replicas", "master_seed"});
  c.monte_carlo.replicas = get_unsigned(mc, "monte_carlo", "replicas", c.monte_carlo.replicas);
  c.monte_carlo.master_seed = get_unsigned(mc, "monte_carlo", "master_seed", c.monte_carlo.master_seed);

  const Json& pr = section("problem");
  check_keys(pr, "problem", {"family", "params", "hypothesis_class", "witnesses"});
  c.problem.family = get_string(pr, "problem", "family", c.problem.family);
  c.problem.params = get_number_map(pr, "problem", "params");
  if (pr.contains("hypothesis_class")) c.problem.hypothesis_class = get_string(pr, "problem", "hypothesis_class", "");
  c.problem.witnesses = get_number_map(pr, "problem", "witnesses");

  const Json& so = section("solver");
  check_keys(so, "solver", {"mode", "tol", "max_iter", "fast_path"});
  c.solver.mode = get_string(so, "solver", "mode", c.solver.mode);
  c.solver.tol = get_number(so, "solver", "tol", c.solver.tol);
  c.solver.max_iter = get_unsigned(so, "solver", "max_iter", c.solver.max_iter);
  c.solver.fast_path = get_bool(so, "solver", "fast_path", c.solver.fast_path);

  const Json& st = section("study");
  c.study.kind = get_string(st, "study", "kind", c.study.kind);
  if (c.study.kind == "solve" || c.study.kind == "converge") {
    check_keys(st, "study", {"kind", "alpha"});
  } else if (c.study.kind == "expect") {
    check_keys(st, "study", {"kind", "alpha", "payoff", "constant", "lower"});
  } else if (c.study.kind == "sweep") {
    check_keys(st, "study", {"kind", "alphas"});
  } else if (c.study.kind == "holder") {
    check_keys(st, "study", {"kind", "alpha", "process", "p", "eps_prime"});
  } else if (c.study.kind == "verify") {
    check_keys(st, "study", {"kind", "inject"});
  } else {
    throw ConfigError("study.kind '" + c.study.kind + "' is not a known study");
  }
  c.study.alpha = get_number(st, "study", "alpha", c.study.alpha);
  c.study.payoff = get_string(st, "study", "payoff", c.study.payoff);
  c.study.constant = get_number(st, "study", "constant", c.study.constant);
  c.study.lower = get_bool(st, "study", "lower", c.study.lower);
  if (st.contains("alphas")) {
    const Json& a = st.at("alphas");
    if (!a.is_array()) throw ConfigError("study.alphas must be an array of numbers");
    for (const auto& v : a) {
      if (!v.is_number()) throw ConfigError("study.alphas must be an array of numbers");
      c.study.alphas.push_back(v.get<double>());
    }
  }
  c.study.process = get_string(st, "study", "process", c.study.process);
  c.study.p = get_number(st, "study", "p", c.study.p);
  c.study.eps_prime = get_number(st, "study", "eps_prime", c.study.eps_prime);
  c.study.inject = get_string(st, "study", "inject", c.study.inject);

  const Json& out = section("output");
  check_keys(out, "output", {"directory"});
  c.output.directory = get_string(out, "output", "directory", c.output.directory);

  validate(c);
  return c;
}

/// Full normalized form; parsing it back gives an equal config.
inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["g"] = {{"sigma_low", c.g.sigma_low}, {"sigma_high", c.g.sigma_high}};
  j["grid"] = {{"horizon", c.grid.horizon}, {"steps", c.grid.steps}};
  j["lattice"] = {{"levels", c.lattice.levels}, {"pieces", c.lattice.pieces}, {"cap", c.lattice.cap}};
  j["monte_carlo"] = {{"replicas", c.monte_carlo.replicas}, {"master_seed", c.monte_carlo.master_seed}};
  Json pr;
  pr["family"] = c.problem.family;
  pr["params"] = Json::object();
  for (const auto& [k, v] : c.problem.params) pr["params"][k] = v;
  if (c.problem.hypothesis_class) pr["hypothesis_class"] = *c.problem.hypothesis_class;
  pr["witnesses"] = Json::object();
  for (const auto& [k, v] : c.problem.witnesses) pr["witnesses"][k] = v;
  j["problem"] = pr;
  j["solver"] = {{"mode", c.solver.mode}, {"tol", c.solver.tol}, {"max_iter", c.solver.max_iter},
                 {"fast_path", c.solver.fast_path}};
  Json st;
  st["kind"] = c.study.kind;
  const std::string& k = c.study.kind;
  if (k == "solve" || k == "converge" || k == "expect" || k == "holder") st["alpha"] = c.study.alpha;
  if (k == "expect") {
    st["payoff"] = c.study.payoff;
    st["constant"] = c.study.constant;
    st["lower"] = c.study.lower;
  }
  if (k == "sweep") st["alphas"] = c.study.alphas;
  if (k == "holder") {
    st["process"] = c.study.process;
    st["p"] = c.study.p;
    st["eps_prime"] = c.study.eps_prime;
  }
  if (k == "verify") st["inject"] = c.study.inject;
  j["study"] = st;
  j["output"] = {{"directory", c.output.directory}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace gsvie::cli
