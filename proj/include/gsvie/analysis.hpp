#pragma once

// Inequality utilities and the studies that turn the solver's output into
// fitted rates: factorial Picard contraction, Hoelder exponents of paths,
// and Lipschitz dependence on a parameter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "gsvie/coefficients.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/gcore.hpp"
#include "gsvie/solver.hpp"

namespace gsvie {

/// a exp(b t): the bound for u(t) <= a + b int_0^t u ds.
inline double gronwall_bound(double a, double b, double t) {
  if (!(a >= 0.0 && b >= 0.0 && t >= 0.0)) throw std::invalid_argument("gronwall_bound: a, b, t must be >= 0");
  if (a == 0.0) return 0.0;
  return a * std::exp(b * t);
}

struct BihariResult {
  double value = 0.0;
  bool blew_up = false;
  double blow_up_time = std::numeric_limits<double>::infinity();
};

/// Solves v' = gamma(v), v(0) = v0 on [0, t] with adaptive Dormand-Prince
/// (relative tolerance 1e-9). Crossing `blow_up_level` is reported, not thrown.
inline BihariResult bihari_majorant(const Modulus& gamma, double v0, double t, double blow_up_level = 1e300) {
  if (!(v0 >= 0.0 && t >= 0.0)) throw std::invalid_argument("bihari_majorant: v0 and t must be >= 0");
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 1>;
  BihariResult r;
  if (t == 0.0 || (v0 == 0.0 && gamma(0.0) == 0.0)) {
    r.value = v0;
    return r;
  }
  auto stepper = ode::make_controlled(1e-300, 1e-9, ode::runge_kutta_dopri5<State>());
  const auto rhs = [&](const State& x, State& dxdt, double) { dxdt[0] = gamma(std::max(x[0], 0.0)); };
  State x{v0};
  double time = 0.0;
  double dt = std::min(t, 1e-3);
  std::size_t guard = 0;
  while (time < t) {
    if (++guard > 10'000'000) throw std::runtime_error("bihari_majorant: step budget exhausted");
    dt = std::min(dt, t - time);
    const double t_before = time;
    if (stepper.try_step(rhs, x, time, dt) == ode::fail) continue;
    if (!std::isfinite(x[0]) || x[0] > blow_up_level) {
      r.blew_up = true;
      r.blow_up_time = t_before;
      r.value = std::numeric_limits<double>::infinity();
      return r;
    }
  }
  r.value = x[0];
  return r;
}

struct JensenReport {
  double lhs = 0.0;  // E[rho(xi)]
  double rhs = 0.0;  // rho(E[xi])
  double tolerance = 0.0;
  bool holds = false;
};

/// Jensen's inequality for concave increasing rho under the sublinear estimate.
template <class Rho>
JensenReport jensen_gap(Rho&& rho, std::span<const double> xi, const Ensemble& ens,
                        double se_mult = kDefaultSeMultiplier) {
  std::vector<double> mapped(xi.size());
  for (std::size_t s = 0; s < xi.size(); ++s) mapped[s] = rho(xi[s]);
  const Estimate l = estimate_values(mapped, ens);
  const Estimate e = estimate_values(xi, ens);
  JensenReport r;
  r.lhs = l.value;
  r.rhs = rho(e.value);
  const double propagated = std::abs(rho(e.value + e.std_error()) - r.rhs);
  r.tolerance = se_mult * std::hypot(l.std_error(), propagated);
  r.holds = r.lhs <= r.rhs + r.tolerance;
  return r;
}

struct RateFit {
  std::string model;
  std::vector<std::pair<std::string, double>> constants;
  std::vector<std::pair<double, double>> points;  // data the fit was run on
  std::vector<double> residuals;
  double tolerance = 0.0;
  bool passed = false;
  std::vector<std::size_t> violations;

  double constant(const std::string& name) const {
    for (const auto& [k, v] : constants)
      if (k == name) return v;
    throw std::out_of_range("RateFit has no constant '" + name + "'");
  }
};

namespace detail {

struct Line {
  double intercept = 0.0;
  double slope = 0.0;
};

inline Line least_squares(std::span<const std::pair<double, double>> xy) {
  if (xy.size() < 2) throw std::invalid_argument("least squares needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xy.size());
  for (const auto& [x, y] : xy) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("least squares: abscissae are all equal");
  const double b = sxy / sxx;
  return {my - b * mx, b};
}

}  // namespace detail

/// Fits d_n <= M C^{n+1} (T^{n+1}/(n+1)!)^theta with theta fixed. log M and
/// log C come from least squares on the first max(2, ceil(k/3)) nonzero
/// increments; passes when every d_n is below twice the envelope and the
/// partial sums of sqrt(d_n) have settled to `cauchy_tol` relative.
inline RateFit fit_factorial_rate(std::span<const double> increments, double theta, double horizon = 1.0,
                                  double cauchy_tol = 1e-6) {
  RateFit fit;
  fit.model = "d_n <= M * C^(n+1) * (T^(n+1)/(n+1)!)^theta";
  fit.tolerance = 2.0;
  for (double d : increments)
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("fit_factorial_rate: increments must be finite and >= 0");
  const auto log_fact = [&](std::size_t n) {
    return static_cast<double>(n + 1) * std::log(horizon) - std::lgamma(static_cast<double>(n) + 2.0);
  };
  std::vector<std::size_t> nz;
  for (std::size_t n = 0; n < increments.size(); ++n)
    if (increments[n] > 0.0) nz.push_back(n);
  for (std::size_t n = 0; n < increments.size(); ++n)
    fit.points.emplace_back(static_cast<double>(n), increments[n]);
  fit.constants = {{"theta", theta}, {"M", 0.0}, {"C", 0.0}};
  if (nz.size() < 2) {
    fit.passed = true;
    fit.residuals.assign(increments.size(), 0.0);
    if (nz.size() == 1) fit.constants[1].second = increments[nz[0]] / std::exp(theta * log_fact(nz[0]));
    return fit;
  }
  const std::size_t window = std::max<std::size_t>(2, (nz.size() + 2) / 3);
  std::vector<std::pair<double, double>> xy;
  for (std::size_t k = 0; k < window; ++k) {
    const std::size_t n = nz[k];
    xy.emplace_back(static_cast<double>(n + 1), std::log(increments[n]) - theta * log_fact(n));
  }
  const auto line = detail::least_squares(xy);
  fit.constants[1].second = std::exp(line.intercept);
  fit.constants[2].second = std::exp(line.slope);
  bool ok = true;
  for (std::size_t n = 0; n < increments.size(); ++n) {
    const double log_env = line.intercept + line.slope * static_cast<double>(n + 1) + theta * log_fact(n);
    if (increments[n] == 0.0) {
      fit.residuals.push_back(0.0);
      continue;
    }
    const double res = std::log(increments[n]) - log_env;
    fit.residuals.push_back(res);
    if (res > std::log(fit.tolerance)) {
      ok = false;
      fit.violations.push_back(n);
    }
  }
  double total = 0.0;
  for (double d : increments) total += std::sqrt(d);
  const double last = std::sqrt(increments.back());
  const bool cauchy = last <= cauchy_tol * std::max(1.0, total);
  fit.constants.emplace_back("sqrt_sum", total);
  fit.passed = ok && cauchy;
  return fit;
}

/// Pooled moment E|X(t_i + lag) - X(t_i)|^p for dyadic lags 2^k dt,
/// k = 0..floor(log2 N) - 2, regressed in log-log. The slope is the fitted
/// 1 + eps'; passes when it is >= 1 + declared_eps_prime - 0.15.
inline RateFit holder_exponent(const AdaptedProcess& x, double p, const Ensemble& ens, double declared_eps_prime = 1.0) {
  detail::require_conforming(x, ens, "holder_exponent");
  if (!(p >= 1.0)) throw std::invalid_argument("holder_exponent: p must be >= 1");
  const std::size_t n = ens.grid().steps();
  const int kmax = static_cast<int>(std::floor(std::log2(static_cast<double>(n)))) - 2;
  if (kmax < 1) throw std::invalid_argument("holder_exponent: grid too coarse for two dyadic lags");
  RateFit fit;
  fit.model = "E|X(t)-X(s)|^p <= c |t-s|^(1+eps')";
  std::vector<std::pair<double, double>> xy;
  std::vector<double> v(ens.size());
  for (int k = 0; k <= kmax; ++k) {
    const std::size_t lag = std::size_t{1} << k;
    parallel_for(ens.size(), [&](std::size_t s) {
      const auto row = x.row(s);
      std::vector<double> terms(n + 1 - lag);
      for (std::size_t i = 0; i + lag <= n; ++i) terms[i] = std::pow(std::abs(row[i + lag] - row[i]), p);
      v[s] = pairwise_sum(terms) / static_cast<double>(terms.size());
    });
    const double moment = estimate_values(v, ens).value;
    const double h = static_cast<double>(lag) * ens.grid().dt();
    fit.points.emplace_back(h, moment);
    if (moment > 0.0) xy.emplace_back(std::log(h), std::log(moment));
  }
  fit.tolerance = 0.15;
  if (xy.size() < 2) {
    fit.constants = {{"exponent", std::numeric_limits<double>::infinity()}, {"c", 0.0}};
    fit.passed = true;
    return fit;
  }
  const auto line = detail::least_squares(xy);
  for (const auto& [lx, ly] : xy) fit.residuals.push_back(ly - (line.intercept + line.slope * lx));
  fit.constants = {{"exponent", line.slope}, {"c", std::exp(line.intercept)}, {"declared_eps_prime", declared_eps_prime}};
  fit.passed = line.slope >= 1.0 + declared_eps_prime - fit.tolerance;
  return fit;
}

struct ContinuityPair {
  double alpha = 0.0;
  double beta = 0.0;
  double distance = 0.0;  // sup_t E|X_alpha(t) - X_beta(t)|^2
};

struct ParameterContinuityStudy {
  std::vector<ContinuityPair> pairs;
  RateFit fit;
  double gronwall_constant = 0.0;
  bool bound_holds = false;
};

/// Constant C with sup_t E|X_a - X_b|^2 <= C |a - b|^2 obtained from the
/// Lipschitz constants, the band, and Gronwall:
///   K = T (1 + sigma_high^4) + sigma_high^2,
///   C = 4 L_bar^2 (1 + 2 K T) exp(8 K L^2 T).
inline double parameter_gronwall_constant(const HypothesisMetadata& m, const GParams& g, double horizon) {
  const double s2 = g.variance_high();
  const double k = horizon * (1.0 + s2 * s2) + s2;
  const double l = m.L_const;
  return 4.0 * m.L_bar * m.L_bar * (1.0 + 2.0 * k * horizon) * std::exp(8.0 * k * l * l * horizon);
}

/// Solves the parameterized problem for every alpha on the same ensemble,
/// regresses log distance on log |alpha - beta| over all pairs, and checks
/// the Gronwall envelope. Passes when the slope is 2 +/- 0.1 and the
/// envelope holds.
inline ParameterContinuityStudy parameter_continuity_study(VolterraProblem problem, std::span<const double> alphas,
                                                           const Ensemble& ens, const SolverConfig& cfg = {},
                                                           double slope_tolerance = 0.1) {
  if (!problem.family.parameterized)
    throw std::invalid_argument("parameter_continuity_study: family is not parameterized");
  if (alphas.size() < 2) throw std::invalid_argument("parameter_continuity_study: need at least two alphas");
  std::vector<AdaptedProcess> paths;
  for (double a : alphas) {
    problem.alpha = a;
    paths.push_back(solve(problem, ens, cfg).paths);
  }
  ParameterContinuityStudy st;
  st.gronwall_constant = parameter_gronwall_constant(problem.metadata, problem.params, problem.grid.horizon());
  st.bound_holds = true;
  std::vector<std::pair<double, double>> xy;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    for (std::size_t j = i + 1; j < alphas.size(); ++j) {
      const double d = sup_msq_distance(paths[i], paths[j], ens);
      st.pairs.push_back({alphas[i], alphas[j], d});
      const double gap = std::abs(alphas[i] - alphas[j]);
      if (d > st.gronwall_constant * gap * gap * (1.0 + 1e-9)) st.bound_holds = false;
      if (gap > 0.0 && d > 0.0) xy.emplace_back(std::log(gap), std::log(d));
    }
  }
  RateFit& fit = st.fit;
  fit.model = "sup_t E|X_a(t)-X_b(t)|^2 = C |a-b|^slope";
  fit.tolerance = slope_tolerance;
  for (const auto& pr : st.pairs) fit.points.emplace_back(std::abs(pr.alpha - pr.beta), pr.distance);
  const bool one_gap = std::all_of(xy.begin(), xy.end(), [&](const auto& q) { return q.first == xy.front().first; });
  if (xy.size() < 2 || one_gap) {
    fit.constants = {{"slope", std::numeric_limits<double>::quiet_NaN()}, {"C", 0.0}};
    fit.passed = false;
    return st;
  }
  const auto line = detail::least_squares(xy);
  for (const auto& [lx, ly] : xy) fit.residuals.push_back(ly - (line.intercept + line.slope * lx));
  fit.constants = {{"slope", line.slope}, {"C", std::exp(line.intercept)}, {"gronwall_constant", st.gronwall_constant}};
  fit.passed = std::abs(line.slope - 2.0) <= slope_tolerance && st.bound_holds;
  return st;
}

struct WellPosednessConfig {
  SolverConfig solver;
  double second_moment_ceiling = 1e6;
  std::size_t probe_points = 16;
};

struct WellPosednessReport {
  bool adapted_stochastic = true;  // M(t) = int_0^t sigma(t,s,X) dB
  bool adapted_drift = true;       // N(t) = int_0^t b(t,s,X) ds + int_0^t h(t,s,X) d<B>
  double mg_norm_2 = 0.0;
  double mg_norm_moment = 0.0;  // at p = 2 + eps
  bool norms_finite = false;
  double sup_second_moment = 0.0;
  bool below_ceiling = false;
  bool passed = false;
};

/// Integral processes of a solution, with the kernel's outer time equal to t_i.
inline std::pair<AdaptedProcess, AdaptedProcess> integral_processes(const VolterraProblem& p, const AdaptedProcess& x,
                                                                    const Ensemble& ens) {
  detail::require_conforming(x, ens, "integral_processes");
  AdaptedProcess m(ens.size(), x.points()), n(ens.size(), x.points());
  const auto& f = p.family;
  parallel_for(ens.size(), [&](std::size_t s) {
    const Scenario& sc = ens.scenario(s);
    for (std::size_t i = 0; i < x.points(); ++i) {
      const double t = p.grid.time(i);
      double ms = 0.0, ns = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        const double tj = p.grid.time(j), xj = x(s, j);
        ms += f.eval_sigma(t, tj, xj, p.alpha) * sc.dB(j);
        ns += f.eval_b(t, tj, xj, p.alpha) * sc.dt() + f.eval_h(t, tj, xj, p.alpha) * sc.dQV(j);
      }
      m(s, i) = ms;
      n(s, i) = ns;
    }
  });
  return {std::move(m), std::move(n)};
}

inline WellPosednessReport well_posedness_suite(const VolterraProblem& p, const Ensemble& ens,
                                                const WellPosednessConfig& cfg = {}) {
  const SolutionEnsemble sol = solve(p, ens, cfg.solver);
  auto [m, n] = integral_processes(p, sol.paths, ens);
  WellPosednessReport r;
  const std::size_t pts = sol.paths.points();
  const std::size_t probes = std::max<std::size_t>(1, std::min(cfg.probe_points, pts));
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t i = probes == 1 ? pts - 1 : k * (pts - 1) / (probes - 1);
    r.adapted_stochastic = r.adapted_stochastic && adaptedness_probe(m, ens, i);
    r.adapted_drift = r.adapted_drift && adaptedness_probe(n, ens, i);
  }
  AdaptedProcess sum(ens.size(), pts);
  for (std::size_t s = 0; s < ens.size(); ++s)
    for (std::size_t i = 0; i < pts; ++i) sum(s, i) = m(s, i) + n(s, i);
  r.mg_norm_2 = mg_norm(sum, 2.0, ens);
  r.mg_norm_moment = mg_norm(sum, p.metadata.moment_power(), ens);
  r.norms_finite = std::isfinite(r.mg_norm_2) && std::isfinite(r.mg_norm_moment);
  const AdaptedProcess zero(ens.size(), pts);
  r.sup_second_moment = sup_msq_distance(sol.paths, zero, ens);
  r.below_ceiling = r.sup_second_moment < cfg.second_moment_ceiling;
  r.passed = r.adapted_stochastic && r.adapted_drift && r.norms_finite && r.below_ceiling;
  return r;
}

}  // namespace gsvie
