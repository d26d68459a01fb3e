#pragma once

// Sublinear expectation over an ensemble: the maximum over controls of
// per-control Monte Carlo means, plus discrete Ito-type integrals and the
// isometry / maximal-inequality diagnostics built on them.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "gsvie/errors.hpp"
#include "gsvie/gcore.hpp"
#include "gsvie/parallel.hpp"
#include "gsvie/summation.hpp"

namespace gsvie {

inline constexpr double kDefaultSeMultiplier = 3.0;

struct ControlMoment {
  std::size_t control = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t replicas = 0;
};

struct Estimate {
  double value = 0.0;
  std::vector<ControlMoment> per_control;
  /// Control attaining `value`: the max for estimate(), the min for lower_expectation().
  std::size_t argmax_control = 0;

  double std_error() const { return per_control.at(argmax_control).std_error; }
};

/// Per-scenario path values X(t_i), row s aligned to the ensemble's scenario order.
class AdaptedProcess {
 public:
  AdaptedProcess() = default;
  AdaptedProcess(std::size_t scenarios, std::size_t points, double fill = 0.0)
      : rows_(scenarios), points_(points), data_(scenarios * points, fill) {}

  std::size_t scenarios() const noexcept { return rows_; }
  std::size_t points() const noexcept { return points_; }
  double& operator()(std::size_t s, std::size_t i) noexcept { return data_[s * points_ + i]; }
  double operator()(std::size_t s, std::size_t i) const noexcept { return data_[s * points_ + i]; }
  std::span<double> row(std::size_t s) noexcept { return {data_.data() + s * points_, points_}; }
  std::span<const double> row(std::size_t s) const noexcept { return {data_.data() + s * points_, points_}; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const AdaptedProcess&, const AdaptedProcess&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t points_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline void require_conforming(const AdaptedProcess& x, const Ensemble& ens, const char* who) {
  if (x.scenarios() != ens.size() || x.points() != ens.grid().steps() + 1)
    throw std::invalid_argument(std::string(who) + ": process shape does not match the ensemble (scenarios x N+1)");
}

inline std::string scenario_key(const Ensemble& ens, std::size_t s) {
  const Scenario& sc = ens.scenario(s);
  return "scenario " + std::to_string(s) + " (control " + std::to_string(sc.control_index()) + ", replica " +
         std::to_string(sc.replica()) + (sc.twin() ? ", twin" : "") + ", seed " + std::to_string(sc.seed()) + ")";
}

template <bool Upper>
Estimate reduce_estimate(std::span<const double> values, const Ensemble& ens) {
  if (values.size() != ens.size())
    throw std::invalid_argument("estimate: expected one payoff value per scenario");
  for (std::size_t s = 0; s < values.size(); ++s)
    if (!std::isfinite(values[s])) throw NonFiniteError("payoff is not finite at " + scenario_key(ens, s));
  const std::size_t m = ens.replicas_per_control();
  Estimate e;
  e.per_control.resize(ens.control_count());
  for (std::size_t c = 0; c < ens.control_count(); ++c) {
    const SampleMoments mom = sample_moments(values.subspan(c * m, m));
    e.per_control[c] = {c, mom.mean, mom.std_error, m};
    const bool better = Upper ? mom.mean > e.per_control[e.argmax_control].mean
                              : mom.mean < e.per_control[e.argmax_control].mean;
    if (c == 0 || better) e.argmax_control = c;
  }
  e.value = e.per_control[e.argmax_control].mean;
  return e;
}

template <class Fn>
std::vector<double> evaluate_payoff(const Ensemble& ens, Fn&& payoff) {
  std::vector<double> v(ens.size());
  parallel_for(ens.size(), [&](std::size_t s) {
    if constexpr (std::is_invocable_v<Fn&, std::size_t, const Scenario&>)
      v[s] = payoff(s, ens.scenario(s));
    else
      v[s] = payoff(ens.scenario(s));
  });
  return v;
}

}  // namespace detail

/// Upper (sublinear) expectation of precomputed per-scenario values.
inline Estimate estimate_values(std::span<const double> values, const Ensemble& ens) {
  return detail::reduce_estimate<true>(values, ens);
}

/// Lower expectation -E[-xi]: the minimum of the same per-control means.
inline Estimate lower_expectation_values(std::span<const double> values, const Ensemble& ens) {
  return detail::reduce_estimate<false>(values, ens);
}

/// `payoff` is called as payoff(scenario) or payoff(scenario_index, scenario).
template <class Fn>
Estimate estimate(Fn&& payoff, const Ensemble& ens) {
  const auto v = detail::evaluate_payoff(ens, payoff);
  return estimate_values(v, ens);
}

template <class Fn>
Estimate lower_expectation(Fn&& payoff, const Ensemble& ens) {
  const auto v = detail::evaluate_payoff(ens, payoff);
  return lower_expectation_values(v, ens);
}

// ---- process builders ----

/// Fills row s by calling fn(s, scenario, row) for every scenario.
template <class Fn>
AdaptedProcess make_process(const Ensemble& ens, Fn&& fn) {
  AdaptedProcess x(ens.size(), ens.grid().steps() + 1);
  parallel_for(ens.size(), [&](std::size_t s) { fn(s, ens.scenario(s), x.row(s)); });
  return x;
}

inline AdaptedProcess brownian_paths(const Ensemble& ens) {
  return make_process(ens, [](std::size_t, const Scenario& sc, std::span<double> row) {
    row[0] = 0.0;
    for (std::size_t j = 0; j < sc.steps(); ++j) row[j + 1] = row[j] + sc.dB(j);
  });
}

template <class Fn>
AdaptedProcess deterministic_process(const Ensemble& ens, Fn&& f) {
  const auto times = ens.grid().times();
  return make_process(ens, [&](std::size_t, const Scenario&, std::span<double> row) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = f(times[i]);
  });
}

inline AdaptedProcess constant_process(const Ensemble& ens, double c) {
  return AdaptedProcess(ens.size(), ens.grid().steps() + 1, c);
}

// ---- stochastic integrals ----

enum class Integrator { dB, dQV, dt };

/// I(t_i) = sum_{j<i} eta(t_j) * increment_j (left endpoint), I(0) = 0.
inline std::vector<double> stochastic_integral(std::span<const double> integrand, const Scenario& sc, Integrator mode) {
  if (integrand.size() != sc.steps() + 1 && integrand.size() != sc.steps())
    throw std::invalid_argument("stochastic_integral: integrand length must be N or N+1");
  std::vector<double> out(sc.steps() + 1, 0.0);
  for (std::size_t j = 0; j < sc.steps(); ++j) {
    double inc = 0.0;
    switch (mode) {
      case Integrator::dB: inc = sc.dB(j); break;
      case Integrator::dQV: inc = sc.dQV(j); break;
      case Integrator::dt: inc = sc.dt(); break;
    }
    out[j + 1] = out[j] + integrand[j] * inc;
  }
  return out;
}

inline AdaptedProcess stochastic_integral(const AdaptedProcess& integrand, const Ensemble& ens, Integrator mode) {
  detail::require_conforming(integrand, ens, "stochastic_integral");
  return make_process(ens, [&](std::size_t s, const Scenario& sc, std::span<double> row) {
    const auto path = stochastic_integral(integrand.row(s), sc, mode);
    std::copy(path.begin(), path.end(), row.begin());
  });
}

// ---- norms ----

/// Per-time estimate of E|X(t_i) - Y(t_i)|^2, i = 0..N.
inline std::vector<double> msq_distance_profile(const AdaptedProcess& x, const AdaptedProcess& y, const Ensemble& ens) {
  detail::require_conforming(x, ens, "sup_msq_distance");
  detail::require_conforming(y, ens, "sup_msq_distance");
  std::vector<double> profile(x.points());
  std::vector<double> v(ens.size());
  for (std::size_t i = 0; i < x.points(); ++i) {
    for (std::size_t s = 0; s < ens.size(); ++s) {
      const double d = x(s, i) - y(s, i);
      v[s] = d * d;
    }
    profile[i] = estimate_values(v, ens).value;
  }
  return profile;
}

/// max over grid times of E|X(t_i) - Y(t_i)|^2.
inline double sup_msq_distance(const AdaptedProcess& x, const AdaptedProcess& y, const Ensemble& ens) {
  const auto p = msq_distance_profile(x, y, ens);
  return *std::max_element(p.begin(), p.end());
}

/// (E[ sum_{i<N} |X(t_i)|^p dt ])^{1/p}.
inline double mg_norm(const AdaptedProcess& x, double p, const Ensemble& ens) {
  if (!(p >= 1.0)) throw std::invalid_argument("mg_norm: p must be >= 1");
  detail::require_conforming(x, ens, "mg_norm");
  const double dt = ens.grid().dt();
  const auto v = detail::evaluate_payoff(ens, [&](std::size_t s, const Scenario&) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < x.points(); ++i) acc += std::pow(std::abs(x(s, i)), p) * dt;
    return acc;
  });
  return std::pow(estimate_values(v, ens).value, 1.0 / p);
}

// ---- isometry and maximal inequality ----

struct IsometryReport {
  double lhs = 0.0;  // E|int eta dB|^2
  double mid = 0.0;  // E int eta^2 d<B>
  double rhs = 0.0;  // sigma_high^2 E int eta^2 dt
  double lhs_se = 0.0;
  double mid_se = 0.0;
  double rhs_se = 0.0;
  bool isometry_holds = false;
  bool bound_holds = false;
};

inline IsometryReport ito_isometry_report(const AdaptedProcess& eta, const Ensemble& ens,
                                          double se_mult = kDefaultSeMultiplier) {
  detail::require_conforming(eta, ens, "ito_isometry_report");
  std::vector<double> sq(ens.size()), qv(ens.size()), tt(ens.size());
  parallel_for(ens.size(), [&](std::size_t s) {
    const Scenario& sc = ens.scenario(s);
    double ib = 0.0, iq = 0.0, it = 0.0;
    for (std::size_t j = 0; j < sc.steps(); ++j) {
      const double e = eta(s, j);
      ib += e * sc.dB(j);
      iq += e * e * sc.dQV(j);
      it += e * e * sc.dt();
    }
    sq[s] = ib * ib;
    qv[s] = iq;
    tt[s] = it;
  });
  const Estimate l = estimate_values(sq, ens);
  const Estimate m = estimate_values(qv, ens);
  const Estimate r = estimate_values(tt, ens);
  const double s2 = ens.params().variance_high();
  IsometryReport rep{l.value, m.value, s2 * r.value, l.std_error(), m.std_error(), s2 * r.std_error()};
  const double comb = std::hypot(rep.lhs_se, rep.mid_se);
  rep.isometry_holds = std::abs(rep.lhs - rep.mid) <= se_mult * comb;
  rep.bound_holds = rep.mid <= rep.rhs + se_mult * std::hypot(rep.mid_se, rep.rhs_se);
  return rep;
}

struct MaximalInequalityReport {
  double sup_moment = 0.0;  // E sup_i |int_0^{t_i} eta dB|^2
  double doob_bound = 0.0;  // 4 sigma_high^2 E int eta^2 dt
  double sup_moment_se = 0.0;
  bool holds = false;
};

inline MaximalInequalityReport maximal_inequality_report(const AdaptedProcess& eta, const Ensemble& ens,
                                                         double se_mult = kDefaultSeMultiplier) {
  detail::require_conforming(eta, ens, "maximal_inequality_report");
  std::vector<double> sup(ens.size()), tt(ens.size());
  parallel_for(ens.size(), [&](std::size_t s) {
    const Scenario& sc = ens.scenario(s);
    double ib = 0.0, best = 0.0, it = 0.0;
    for (std::size_t j = 0; j < sc.steps(); ++j) {
      const double e = eta(s, j);
      ib += e * sc.dB(j);
      best = std::max(best, ib * ib);
      it += e * e * sc.dt();
    }
    sup[s] = best;
    tt[s] = it;
  });
  const Estimate a = estimate_values(sup, ens);
  const Estimate b = estimate_values(tt, ens);
  MaximalInequalityReport rep{a.value, 4.0 * ens.params().variance_high() * b.value, a.std_error()};
  rep.holds = rep.sup_moment <= rep.doob_bound + se_mult * rep.sup_moment_se;
  return rep;
}

// ---- adaptedness ----

/// True iff X(t_i) agrees bitwise across every pair of scenarios whose
/// histories (lambda_j, dW_j), j < i, agree bitwise. Ensembles without such
/// pairs make the probe vacuous; use EnsembleOptions::twin_branch_step.
inline bool adaptedness_probe(const AdaptedProcess& x, const Ensemble& ens, std::size_t i) {
  detail::require_conforming(x, ens, "adaptedness_probe");
  if (i >= x.points()) throw std::out_of_range("adaptedness_probe: time index beyond the grid");
  std::map<std::vector<std::uint64_t>, double> seen;
  for (std::size_t s = 0; s < ens.size(); ++s) {
    const Scenario& sc = ens.scenario(s);
    std::vector<std::uint64_t> key;
    key.reserve(2 * i);
    for (std::size_t j = 0; j < i; ++j) {
      key.push_back(std::bit_cast<std::uint64_t>(sc.control().density(j)));
      key.push_back(std::bit_cast<std::uint64_t>(sc.dW(j)));
    }
    const double v = x(s, i);
    auto [it, inserted] = seen.emplace(std::move(key), v);
    if (!inserted && std::bit_cast<std::uint64_t>(it->second) != std::bit_cast<std::uint64_t>(v)) return false;
  }
  return true;
}

}  // namespace gsvie
