#pragma once

// Left-endpoint discretization of
//   X(t) = phi(t) + int_0^t b(t,s,X) ds + int_0^t h(t,s,X) d<B> + int_0^t sigma(t,s,X) dB
// solved by forward recursion (direct) or by full-path Picard sweeps.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsvie/coefficients.hpp"
#include "gsvie/errors.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/gcore.hpp"
#include "gsvie/parallel.hpp"

namespace gsvie {

struct VolterraProblem {
  CoefficientFamily family;
  HypothesisMetadata metadata;
  TimeGrid grid;
  GParams params;
  double alpha = 0.0;
};

enum class SolverKind { direct, picard };

inline const char* to_string(SolverKind k) { return k == SolverKind::direct ? "direct" : "picard"; }

struct SolutionEnsemble {
  AdaptedProcess paths;
  SolverKind solver = SolverKind::direct;
  std::string family;
  double alpha = 0.0;
};

struct PicardReport {
  std::vector<double> increments;  // d_n = sup_i E|X_{n+1}(t_i) - X_n(t_i)|^2
  std::size_t iterations = 0;
  bool converged = false;
  double tol = 0.0;
};

struct PicardOptions {
  /// Start from phi + initial_offset instead of phi (uniqueness checks).
  double initial_offset = 0.0;
  /// Running-sum evaluation for kernels that ignore the outer time. Same
  /// summation order as the quadratic path, so results are bit-identical.
  bool fast_path = false;
};

namespace detail {

inline void require_problem_matches(const VolterraProblem& p, const Ensemble& ens) {
  if (!(p.grid == ens.grid())) throw std::invalid_argument("problem grid does not match the ensemble grid");
  if (!(p.params == ens.params())) throw std::invalid_argument("problem volatility band does not match the ensemble");
}

inline double kernel_term(const VolterraProblem& p, const Scenario& sc, double t_outer, std::size_t i, std::size_t j,
                          double x) {
  const double s = p.grid.time(j);
  const CoefficientFamily& f = p.family;
  double term = 0.0;
  if (f.b) term += f.b(t_outer, s, x, p.alpha) * sc.dt();
  if (f.h) term += f.h(t_outer, s, x, p.alpha) * sc.dQV(j);
  if (f.sigma) term += f.sigma(t_outer, s, x, p.alpha) * sc.dB(j);
  if (!std::isfinite(term)) {
    throw NonFiniteError("coefficient value is not finite at i=" + std::to_string(i) + ", j=" + std::to_string(j) +
                         ", x=" + std::to_string(x));
  }
  return term;
}

inline double forcing(const VolterraProblem& p, std::size_t i) {
  const double v = p.family.eval_phi(p.grid.time(i), p.alpha);
  if (!std::isfinite(v)) throw NonFiniteError("forcing phi is not finite at i=" + std::to_string(i));
  return v;
}

// out[i] = rhs with `in` inside the sums, for every i.
inline void picard_map(const VolterraProblem& p, std::span<const double> in, const Scenario& sc, std::span<double> out,
                       bool fast) {
  const std::size_t n = p.grid.steps();
  if (fast && p.family.outer_time_free) {
    double acc = 0.0;
    out[0] = forcing(p, 0) + acc;
    for (std::size_t i = 1; i <= n; ++i) {
      acc += kernel_term(p, sc, p.grid.time(i), i, i - 1, in[i - 1]);
      out[i] = forcing(p, i) + acc;
    }
    return;
  }
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = p.grid.time(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < i; ++j) acc += kernel_term(p, sc, t, i, j, in[j]);
    out[i] = forcing(p, i) + acc;
  }
}

}  // namespace detail

/// phi(t_i) + sum_{j<i} [b(t_i,t_j,X_j) dt + h(t_i,t_j,X_j) d<B>_j + sigma(t_i,t_j,X_j) dB_j].
inline double rhs_eval(const VolterraProblem& p, std::span<const double> x, const Scenario& sc, std::size_t i) {
  if (i > p.grid.steps() || x.size() < i) throw std::out_of_range("rhs_eval: index beyond available path values");
  if (sc.steps() != p.grid.steps()) throw std::invalid_argument("rhs_eval: scenario does not match the grid");
  const double t = p.grid.time(i);
  double acc = 0.0;
  for (std::size_t j = 0; j < i; ++j) acc += detail::kernel_term(p, sc, t, i, j, x[j]);
  return detail::forcing(p, i) + acc;
}

/// Exact fixed point of the discrete map by forward recursion.
inline std::vector<double> direct_solve(const VolterraProblem& p, const Scenario& sc, bool fast_path = false) {
  if (sc.steps() != p.grid.steps()) throw std::invalid_argument("direct_solve: scenario does not match the grid");
  const std::size_t n = p.grid.steps();
  std::vector<double> x(n + 1);
  if (fast_path && p.family.outer_time_free) {
    double acc = 0.0;
    x[0] = detail::forcing(p, 0) + acc;
    for (std::size_t i = 1; i <= n; ++i) {
      acc += detail::kernel_term(p, sc, p.grid.time(i), i, i - 1, x[i - 1]);
      x[i] = detail::forcing(p, i) + acc;
    }
    return x;
  }
  for (std::size_t i = 0; i <= n; ++i) x[i] = rhs_eval(p, x, sc, i);
  return x;
}

inline SolutionEnsemble direct_solve(const VolterraProblem& p, const Ensemble& ens, bool fast_path = false) {
  detail::require_problem_matches(p, ens);
  SolutionEnsemble sol{AdaptedProcess(ens.size(), p.grid.steps() + 1), SolverKind::direct, p.family.name, p.alpha};
  parallel_for(ens.size(), [&](std::size_t s) {
    const auto x = direct_solve(p, ens.scenario(s), fast_path);
    std::copy(x.begin(), x.end(), sol.paths.row(s).begin());
  });
  return sol;
}

/// Picard iteration X_0 = phi (+ offset), X_{n+1} = rhs(X_n) on the whole
/// path, until d_n <= tol or max_iter sweeps. Non-convergence is reported,
/// not thrown.
inline std::pair<SolutionEnsemble, PicardReport> picard_solve(const VolterraProblem& p, const Ensemble& ens, double tol,
                                                              std::size_t max_iter, const PicardOptions& opt = {}) {
  if (!(tol > 0.0)) throw std::invalid_argument("picard_solve: tol must be > 0");
  if (max_iter == 0) throw std::invalid_argument("picard_solve: max_iter must be >= 1");
  detail::require_problem_matches(p, ens);
  const std::size_t pts = p.grid.steps() + 1;
  AdaptedProcess cur(ens.size(), pts);
  for (std::size_t s = 0; s < ens.size(); ++s)
    for (std::size_t i = 0; i < pts; ++i) cur(s, i) = detail::forcing(p, i) + opt.initial_offset;
  AdaptedProcess next(ens.size(), pts);
  PicardReport rep;
  rep.tol = tol;
  for (std::size_t n = 0; n < max_iter; ++n) {
    parallel_for(ens.size(), [&](std::size_t s) {
      detail::picard_map(p, cur.row(s), ens.scenario(s), next.row(s), opt.fast_path);
    });
    const double d = sup_msq_distance(next, cur, ens);
    rep.increments.push_back(d);
    rep.iterations = n + 1;
    std::swap(cur, next);
    if (d <= tol) {
      rep.converged = true;
      break;
    }
  }
  return {SolutionEnsemble{std::move(cur), SolverKind::picard, p.family.name, p.alpha}, std::move(rep)};
}

struct SolverConfig {
  SolverKind kind = SolverKind::direct;
  double tol = 1e-10;
  std::size_t max_iter = 0;  // 0 means N
  bool fast_path = false;
};

inline SolutionEnsemble solve(const VolterraProblem& p, const Ensemble& ens, const SolverConfig& cfg,
                              PicardReport* report = nullptr) {
  if (cfg.kind == SolverKind::direct) return direct_solve(p, ens, cfg.fast_path);
  auto [sol, rep] = picard_solve(p, ens, cfg.tol, cfg.max_iter == 0 ? p.grid.steps() : cfg.max_iter,
                                 {0.0, cfg.fast_path});
  if (report) *report = std::move(rep);
  return std::move(sol);
}

/// Solves every scenario, then estimates payoff(path, scenario).
template <class Payoff>
Estimate solve_expect(const VolterraProblem& p, const Ensemble& ens, Payoff&& payoff, const SolverConfig& cfg = {}) {
  const SolutionEnsemble sol = solve(p, ens, cfg);
  return estimate([&](std::size_t s, const Scenario& sc) { return payoff(sol.paths.row(s), sc); }, ens);
}

struct ContinuityRow {
  double t0 = 0.0;
  double t1 = 0.0;
  double value = 0.0;  // E|X(t1) - X(t0)|^2
};

inline std::vector<ContinuityRow> msq_continuity_profile(const SolutionEnsemble& sol, const Ensemble& ens) {
  detail::require_conforming(sol.paths, ens, "msq_continuity_profile");
  const auto t = ens.grid().times();
  std::vector<ContinuityRow> rows(ens.grid().steps());
  std::vector<double> v(ens.size());
  for (std::size_t i = 0; i + 1 < sol.paths.points(); ++i) {
    for (std::size_t s = 0; s < ens.size(); ++s) {
      const double d = sol.paths(s, i + 1) - sol.paths(s, i);
      v[s] = d * d;
    }
    rows[i] = {t[i], t[i + 1], estimate_values(v, ens).value};
  }
  return rows;
}

}  // namespace gsvie
