#pragma once

// Executes one study from an ExperimentConfig and writes its artifacts.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gsvie/analysis.hpp"
#include "gsvie/cli/experiment.hpp"
#include "gsvie/cli/verify.hpp"
#include "gsvie/coefficients.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/gcore.hpp"
#include "gsvie/parallel.hpp"
#include "gsvie/solver.hpp"

#ifndef GSVIE_VERSION
#define GSVIE_VERSION "0.0.0"
#endif

namespace gsvie::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kContractViolation = 2 };

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

/// Comma-separated, header row, LF endings, 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    out_ << header << '\n';
  }
  template <class... Ts>
  void row(const Ts&... v) {
    std::string line;
    bool first = true;
    ((line += (first ? "" : ","), line += cell(v), first = false), ...);
    out_ << line << '\n';
  }

 private:
  static std::string cell(double v) { return fmt::format("{:.17g}", v); }
  static std::string cell(std::size_t v) { return fmt::format("{}", v); }
  std::ofstream out_;
};

inline Json to_json(const Estimate& e) {
  Json rows = Json::array();
  for (const auto& c : e.per_control)
    rows.push_back({{"control", c.control}, {"mean", c.mean}, {"std_error", c.std_error}, {"replicas", c.replicas}});
  return {{"value", e.value}, {"std_error", e.std_error()}, {"argmax_control", e.argmax_control}, {"per_control", rows}};
}

inline Json to_json(const RateFit& f) {
  Json c = Json::object();
  for (const auto& [k, v] : f.constants) c[k] = detail::finite_or_null(v);
  Json res = Json::array();
  for (double r : f.residuals) res.push_back(detail::finite_or_null(r));
  return {{"model", f.model}, {"constants", c},       {"residuals", res},
          {"tolerance", f.tolerance}, {"passed", f.passed}, {"violations", f.violations}};
}

inline Json to_json(const PicardReport& r) {
  return {{"iterations", r.iterations}, {"converged", r.converged}, {"tol", r.tol}, {"increments", r.increments}};
}

/// Family and metadata with the config's class and witness overrides applied.
inline VolterraProblem make_problem(const ExperimentConfig& c) {
  auto [f, m] = builtin_family(c.problem.family, c.problem.params, c.grid.horizon);
  if (c.problem.hypothesis_class) m.cls = hypothesis_class_from_string(*c.problem.hypothesis_class);
  for (const auto& [k, v] : c.problem.witnesses) {
    if (k == "L") {
      m.L_ts = [v](double, double) { return v; };
      m.L_const = v;
    } else if (k == "L_bar") {
      m.L_bar = v;
    } else if (k == "eps") {
      m.eps = v;
    } else if (k == "eps_bar") {
      m.eps_bar = v;
    }
  }
  return VolterraProblem{std::move(f), std::move(m), TimeGrid(c.grid.horizon, c.grid.steps),
                         GParams(c.g.sigma_low, c.g.sigma_high), c.study.alpha};
}

inline Ensemble make_ensemble(const ExperimentConfig& c) {
  const GParams g(c.g.sigma_low, c.g.sigma_high);
  const TimeGrid grid(c.grid.horizon, c.grid.steps);
  const auto lattice = build_control_lattice(g, grid, c.lattice.levels, c.lattice.pieces, c.lattice.cap);
  return generate_ensemble(g, grid, lattice, c.monte_carlo.replicas, c.monte_carlo.master_seed);
}

inline SolverConfig make_solver(const ExperimentConfig& c) {
  SolverConfig s;
  s.kind = c.solver.mode == "picard" ? SolverKind::picard : SolverKind::direct;
  s.tol = c.solver.tol;
  s.max_iter = c.solver.max_iter;
  s.fast_path = c.solver.fast_path;
  return s;
}

struct RunResult {
  int exit_code = kOk;
  std::vector<std::string> failed_checks;
};

/// Runs the configured study into `c.output.directory`. Throws on
/// configuration or runtime errors; contract violations in verify are
/// reported through the exit code.
inline RunResult run_study(const ExperimentConfig& c) {
  validate(c);
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(c.output.directory);
  fs::create_directories(dir);
  RunResult result;
  const std::string& kind = c.study.kind;

  if (kind == "solve") {
    const Ensemble ens = make_ensemble(c);
    const VolterraProblem p = make_problem(c);
    PicardReport rep;
    const SolutionEnsemble sol = solve(p, ens, make_solver(c), &rep);
    CsvWriter csv(dir / "paths.csv", "scenario_id,control_id,t,X");
    const auto t = ens.grid().times();
    for (std::size_t s = 0; s < ens.size(); ++s)
      for (std::size_t i = 0; i < t.size(); ++i) csv.row(s, ens.scenario(s).control_index(), t[i], sol.paths(s, i));
    const std::size_t n = ens.grid().steps();
    std::vector<double> xt(ens.size()), xt2(ens.size());
    for (std::size_t s = 0; s < ens.size(); ++s) {
      xt[s] = sol.paths(s, n);
      xt2[s] = xt[s] * xt[s];
    }
    Json summary{{"family", p.family.name},
                 {"solver", to_string(sol.solver)},
                 {"alpha", p.alpha},
                 {"scenarios", ens.size()},
                 {"terminal_mean", to_json(estimate_values(xt, ens))},
                 {"terminal_second_moment", to_json(estimate_values(xt2, ens))}};
    if (sol.solver == SolverKind::picard) summary["picard"] = to_json(rep);
    write_json(dir / "summary.json", summary);
  } else if (kind == "expect") {
    const Ensemble ens = make_ensemble(c);
    const std::string& payoff = c.study.payoff;
    std::vector<double> v(ens.size());
    const std::size_t n = ens.grid().steps();
    if (payoff == "X_T" || payoff == "X_T^2") {
      const SolutionEnsemble sol = solve(make_problem(c), ens, make_solver(c));
      for (std::size_t s = 0; s < ens.size(); ++s) {
        const double x = sol.paths(s, n);
        v[s] = payoff == "X_T" ? x : x * x;
      }
    } else {
      for (std::size_t s = 0; s < ens.size(); ++s) {
        const Scenario& sc = ens.scenario(s);
        double b = 0.0, q = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          b += sc.dB(j);
          q += sc.dQV(j);
        }
        if (payoff == "B_T") v[s] = b;
        else if (payoff == "B_T^2") v[s] = b * b;
        else if (payoff == "QV_T") v[s] = q;
        else v[s] = c.study.constant;
      }
    }
    const Estimate e = c.study.lower ? lower_expectation_values(v, ens) : estimate_values(v, ens);
    Json j = to_json(e);
    j["payoff"] = payoff;
    j["side"] = c.study.lower ? "lower" : "upper";
    write_json(dir / "estimate.json", j);
  } else if (kind == "converge") {
    const Ensemble ens = make_ensemble(c);
    const VolterraProblem p = make_problem(c);
    const auto [sol, rep] = picard_solve(p, ens, c.solver.tol, c.solver.max_iter == 0 ? c.grid.steps : c.solver.max_iter,
                                         {0.0, c.solver.fast_path});
    CsvWriter csv(dir / "increments.csv", "iter,d_n");
    for (std::size_t k = 0; k < rep.increments.size(); ++k) csv.row(k, rep.increments[k]);
    Json j = to_json(fit_factorial_rate(rep.increments, p.metadata.theta(), c.grid.horizon));
    j["picard"] = {{"iterations", rep.iterations}, {"converged", rep.converged}, {"tol", rep.tol}};
    write_json(dir / "ratefit.json", j);
  } else if (kind == "sweep") {
    const Ensemble ens = make_ensemble(c);
    const auto st = parameter_continuity_study(make_problem(c), c.study.alphas, ens, make_solver(c));
    CsvWriter csv(dir / "continuity.csv", "alpha,beta,distance");
    for (const auto& pr : st.pairs) csv.row(pr.alpha, pr.beta, pr.distance);
    Json j = to_json(st.fit);
    j["gronwall_constant"] = detail::finite_or_null(st.gronwall_constant);
    j["bound_holds"] = st.bound_holds;
    write_json(dir / "slope.json", j);
  } else if (kind == "holder") {
    const Ensemble ens = make_ensemble(c);
    AdaptedProcess x;
    if (c.study.process == "B") {
      x = brownian_paths(ens);
    } else {
      x = solve(make_problem(c), ens, make_solver(c)).paths;
    }
    const RateFit fit = holder_exponent(x, c.study.p, ens, c.study.eps_prime);
    CsvWriter csv(dir / "moments.csv", "lag,moment");
    for (const auto& [lag, m] : fit.points) csv.row(lag, m);
    write_json(dir / "exponent.json", to_json(fit));
  } else if (kind == "verify") {
    const VerifyResult v = run_verify(c.monte_carlo.master_seed, c.study.inject);
    write_json(dir / "verify.json", v.document);
    result.failed_checks = v.failed;
    if (!v.failed.empty()) result.exit_code = kContractViolation;
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "manifest.json", {{"tool", "gsvie"},
                                     {"version", GSVIE_VERSION},
                                     {"study", kind},
                                     {"threads", max_threads()},
                                     {"wall_time_seconds", wall},
                                     {"config", config_to_json(c)}});
  return result;
}

}  // namespace gsvie::cli
