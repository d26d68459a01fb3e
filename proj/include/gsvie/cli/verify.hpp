#pragma once

// The `verify` study: every invariant of the library as one named boolean
// with its measured margin. Fixtures, sizes and tolerances are fixed here;
// only the master seed varies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "gsvie/analysis.hpp"
#include "gsvie/cli/experiment.hpp"
#include "gsvie/coefficients.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/gcore.hpp"
#include "gsvie/solver.hpp"

namespace gsvie::cli {

namespace detail {

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

class CheckBook {
 public:
  void add(const std::string& name, bool passed, Json measured = Json::object()) {
    measured["passed"] = passed;
    checks_[name] = std::move(measured);
    if (!passed) failed_.push_back(name);
  }
  const std::vector<std::string>& failed() const { return failed_; }
  Json checks() const { return checks_; }

 private:
  Json checks_ = Json::object();
  std::vector<std::string> failed_;
};

inline VolterraProblem problem_for(const std::string& family, const GParams& g, const TimeGrid& grid,
                                   const FamilyParams& params = {}) {
  auto [f, m] = builtin_family(family, params, grid.horizon());
  return VolterraProblem{std::move(f), std::move(m), grid, g, 0.0};
}

inline Ensemble extremes(const GParams& g, const TimeGrid& grid, std::size_t replicas, std::uint64_t seed,
                         const EnsembleOptions& opt = {}) {
  return generate_ensemble(g, grid, build_control_lattice(g, grid, g.degenerate() ? 1 : 2, 1), replicas, seed, opt);
}

inline double ulp_scale(double magnitude) { return 64.0 * std::numeric_limits<double>::epsilon() * magnitude; }

}  // namespace detail

struct VerifyResult {
  Json document;
  std::vector<std::string> failed;
};

/// Runs the invariant suite. `inject` = "lipschitz-violation" audits
/// linear_ode against L = 0.5 so the Lipschitz check must fail.
inline VerifyResult run_verify(std::uint64_t seed, const std::string& inject = "") {
  detail::CheckBook book;
  const GParams band(1.0, 2.0);
  const GParams unit(1.0, 1.0);

  // -- quadratic variation band and common random numbers
  {
    const TimeGrid grid(1.0, 200);
    const auto lat = build_control_lattice(band, grid, 3, 2);
    const Ensemble ens = generate_ensemble(band, grid, lat, 56, seed);
    std::size_t violations = 0, count = 0;
    bool lower_hit = false, upper_hit = false;
    double crn_gap = 0.0;
    for (const Scenario& sc : ens.scenarios()) {
      for (std::size_t j = 0; j < sc.steps(); ++j) {
        const double q = sc.dQV(j);
        ++count;
        if (q < band.variance_low() * grid.dt() || q > band.variance_high() * grid.dt()) ++violations;
        lower_hit = lower_hit || q == band.variance_low() * grid.dt();
        upper_hit = upper_hit || q == band.variance_high() * grid.dt();
        const double w = sc.dW(j);
        if (w != 0.0) {
          const double ratio = sc.dB(j) * sc.dB(j) / q;
          crn_gap = std::max(crn_gap, std::abs(ratio / (w * w / grid.dt()) - 1.0));
        }
      }
    }
    book.add("qv_band", violations == 0 && lower_hit && upper_hit,
             {{"increments", count}, {"violations", violations}, {"controls", lat.size()}});
    book.add("crn_ratio", crn_gap <= 1e-12, {{"max_relative_gap", crn_gap}});
  }

  // -- G is monotone, sublinear, positively homogeneous
  {
    rng::Stream st(seed, 0, 101);
    double worst = 0.0;
    bool ok = g_function(1.0, band) == 2.0 && g_function(-1.0, band) == -0.5 && g_function(0.0, band) == 0.0;
    for (int k = 0; k < 1000; ++k) {
      const double x = st.uniform(-10, 10), y = st.uniform(-10, 10), c = st.uniform(0, 5);
      worst = std::max(worst, g_function(x + y, band) - g_function(x, band) - g_function(y, band));
      ok = ok && std::abs(g_function(c * x, band) - c * g_function(x, band)) <= detail::ulp_scale(20.0 * (1.0 + c));
      ok = ok && (x <= y ? g_function(x, band) <= g_function(y, band) : true);
    }
    ok = ok && worst <= detail::ulp_scale(40.0);
    book.add("g_sublinear", ok, {{"max_subadditivity_excess", worst}});
  }

  // -- estimator axioms on randomized payoff pairs
  {
    const TimeGrid grid(1.0, 32);
    const Ensemble ens = generate_ensemble(band, grid, build_control_lattice(band, grid, 3, 2), 64, seed);
    const AdaptedProcess b = brownian_paths(ens);
    std::vector<std::array<double, 4>> feat(ens.size());
    for (std::size_t s = 0; s < ens.size(); ++s) {
      double qv = 0.0;
      for (std::size_t j = 0; j < grid.steps(); ++j) qv += ens.scenario(s).dQV(j);
      feat[s] = {b(s, grid.steps()), b(s, grid.steps()) * b(s, grid.steps()), std::sin(b(s, grid.steps() / 2)), qv};
    }
    bool mono = true, cons = true, sub = true, homo = true, lower = true;
    double sub_excess = 0.0, homo_gap = 0.0;
    std::vector<double> x(ens.size()), y(ens.size()), z(ens.size()), w(ens.size());
    for (std::uint64_t k = 0; k < 100; ++k) {
      rng::Stream st(seed, k, 102);
      std::array<double, 4> a{}, c{};
      for (auto& v : a) v = st.uniform(-2, 2);
      for (auto& v : c) v = st.uniform(-2, 2);
      const double constant = st.uniform(-5, 5);
      const double scale = st.uniform(0, 4);
      const double pow2 = std::ldexp(1.0, static_cast<int>(k % 7) - 3);
      for (std::size_t s = 0; s < ens.size(); ++s) {
        x[s] = a[0] * feat[s][0] + a[1] * feat[s][1] + a[2] * feat[s][2] + a[3] * feat[s][3];
        y[s] = c[0] * feat[s][0] + c[1] * feat[s][1] + c[2] * feat[s][2] + c[3] * feat[s][3];
      }
      const Estimate ex = estimate_values(x, ens), ey = estimate_values(y, ens);
      for (std::size_t s = 0; s < ens.size(); ++s) z[s] = x[s] + std::abs(y[s]);
      mono = mono && estimate_values(z, ens).value >= ex.value;
      std::fill(w.begin(), w.end(), constant);
      cons = cons && estimate_values(w, ens).value == constant;
      for (std::size_t s = 0; s < ens.size(); ++s) z[s] = x[s] + y[s];
      const double excess = estimate_values(z, ens).value - ex.value - ey.value;
      double mag = 0.0;
      for (std::size_t s = 0; s < ens.size(); ++s) mag = std::max(mag, std::abs(x[s]) + std::abs(y[s]));
      sub_excess = std::max(sub_excess, excess / mag);
      sub = sub && excess <= detail::ulp_scale(mag);
      for (std::size_t s = 0; s < ens.size(); ++s) z[s] = pow2 * x[s];
      homo = homo && estimate_values(z, ens).value == pow2 * ex.value;
      for (std::size_t s = 0; s < ens.size(); ++s) z[s] = scale * x[s];
      const double gap = std::abs(estimate_values(z, ens).value - scale * ex.value);
      homo_gap = std::max(homo_gap, gap / std::max(mag * scale, 1e-300));
      homo = homo && gap <= detail::ulp_scale(mag * scale);
      lower = lower && lower_expectation_values(x, ens).value <= ex.value;
    }
    book.add("estimator_monotone", mono);
    book.add("estimator_constant", cons);
    book.add("estimator_subadditive", sub, {{"max_relative_excess", sub_excess}});
    book.add("estimator_homogeneous", homo, {{"max_relative_gap", homo_gap}});
    book.add("lower_le_upper", lower);
  }

  // -- G-expectation endpoints of B_T^2
  {
    const TimeGrid grid(1.0, 50);
    const Ensemble ens = detail::extremes(band, grid, 4000, seed);
    const AdaptedProcess b = brownian_paths(ens);
    const auto sq = [&](std::size_t s, const Scenario&) { return b(s, 50) * b(s, 50); };
    const Estimate up = estimate(sq, ens), lo = lower_expectation(sq, ens);
    const bool ok = std::abs(up.value - 4.0) <= 3.0 * up.std_error() && std::abs(lo.value - 1.0) <= 3.0 * lo.std_error() &&
                    up.argmax_control == 1 && lo.argmax_control == 0;
    book.add("expectation_endpoints", ok,
             {{"upper", up.value}, {"upper_se", up.std_error()}, {"lower", lo.value}, {"lower_se", lo.std_error()}});
  }

  // -- isometry and Doob surrogate
  {
    const TimeGrid grid(1.0, 100);
    const Ensemble ens = detail::extremes(band, grid, 2000, seed);
    const AdaptedProcess one = constant_process(ens, 1.0);
    AdaptedProcess sinb = brownian_paths(ens);
    for (std::size_t s = 0; s < ens.size(); ++s)
      for (auto& v : sinb.row(s)) v = std::sin(v);
    for (const auto& [name, eta] : {std::pair<const char*, const AdaptedProcess*>{"constant", &one}, {"sin_b", &sinb}}) {
      const auto iso = ito_isometry_report(*eta, ens);
      book.add(std::string("isometry_") + name, iso.isometry_holds && iso.bound_holds,
               {{"lhs", iso.lhs}, {"mid", iso.mid}, {"rhs", iso.rhs}, {"lhs_se", iso.lhs_se}, {"mid_se", iso.mid_se}});
      const auto doob = maximal_inequality_report(*eta, ens);
      book.add(std::string("doob_") + name, doob.holds,
               {{"sup_moment", doob.sup_moment}, {"doob_bound", doob.doob_bound}, {"se", doob.sup_moment_se}});
    }
  }

  // -- adaptedness probe on a twin ensemble
  {
    const TimeGrid grid(1.0, 32);
    EnsembleOptions opt;
    opt.twin_branch_step = 16;
    const Ensemble ens = detail::extremes(band, grid, 16, seed, opt);
    const AdaptedProcess b = brownian_paths(ens);
    const AdaptedProcess peek = make_process(ens, [](std::size_t, const Scenario& sc, std::span<double> row) {
      for (std::size_t i = 0; i < sc.steps(); ++i) row[i] = sc.dW(i);
    });
    bool adapted = true;
    for (std::size_t i = 0; i <= grid.steps(); ++i) adapted = adapted && adaptedness_probe(b, ens, i);
    book.add("adaptedness", adapted && !adaptedness_probe(peek, ens, 16),
             {{"brownian_adapted", adapted}, {"lookahead_detected", !adaptedness_probe(peek, ens, 16)}});
  }

  // -- Picard reaches the direct solution bit for bit
  {
    const TimeGrid grid(1.0, 200);
    const Ensemble ens = detail::extremes(band, grid, 64, seed);
    for (const char* fam : {"linear_ode", "conv_cosh", "geometric"}) {
      const auto p = detail::problem_for(fam, band, grid);
      const auto direct = direct_solve(p, ens);
      const auto [pic, rep] = picard_solve(p, ens, 1e-300, grid.steps(), {0.0, true});
      double gap = 0.0;
      for (std::size_t k = 0; k < direct.paths.data().size(); ++k)
        gap = std::max(gap, std::abs(direct.paths.data()[k] - pic.paths.data()[k]));
      book.add(std::string("picard_equals_direct_") + fam, gap <= 1e-12,
               {{"max_abs_gap", gap}, {"iterations", rep.iterations}});
    }
  }

  // -- uniqueness from two starting points
  {
    const TimeGrid grid(1.0, 100);
    const Ensemble ens = detail::extremes(band, grid, 200, seed);
    const auto p = detail::problem_for("geometric", band, grid);
    const auto [a, ra] = picard_solve(p, ens, 1e-8, 1000, {0.0, true});
    const auto [b, rb] = picard_solve(p, ens, 1e-8, 1000, {1.0, true});
    const double d = sup_msq_distance(a.paths, b.paths, ens);
    book.add("uniqueness", ra.converged && rb.converged && d <= 1e-8,
             {{"distance", d}, {"iterations_from_phi", ra.iterations}, {"iterations_from_phi_plus_one", rb.iterations}});
  }

  // -- classical reductions
  {
    const TimeGrid grid(1.0, 2000);
    const Ensemble ens = detail::extremes(unit, grid, 1, seed);
    const auto lin = direct_solve(detail::problem_for("linear_ode", unit, grid), ens.scenario(0), true);
    const auto cc = direct_solve(detail::problem_for("conv_cosh", unit, grid), ens.scenario(0));
    const double e1 = std::abs(lin.back() - std::numbers::e);
    const double e2 = std::abs(cc.back() - std::cosh(1.0));
    book.add("classical_linear_ode", e1 <= 5e-3, {{"x_T", lin.back()}, {"abs_error", e1}});
    book.add("classical_conv_cosh", e2 <= 5e-3, {{"x_T", cc.back()}, {"abs_error", e2}});
  }
  {
    const TimeGrid grid(1.0, 1000);
    SolverConfig sc;
    sc.fast_path = true;
    const auto sq = [](std::span<const double> x, const Scenario&) { return x.back() * x.back(); };
    const Ensemble ens = detail::extremes(band, grid, 4000, seed);
    const Estimate g = solve_expect(detail::problem_for("geometric", band, grid), ens, sq, sc);
    const double e4 = std::exp(4.0);
    book.add("g_expectation_geometric", std::abs(g.value - e4) <= 3.0 * g.std_error() + 0.05 * e4 && g.argmax_control == 1,
             {{"value", g.value}, {"se", g.std_error()}, {"target", e4}});
    const Ensemble cl = detail::extremes(unit, grid, 4000, seed);
    const Estimate c = solve_expect(detail::problem_for("geometric", unit, grid), cl, sq, sc);
    book.add("classical_geometric", std::abs(c.value - std::numbers::e) <= 3.0 * c.std_error() + 0.05 * std::numbers::e,
             {{"value", c.value}, {"se", c.std_error()}, {"target", std::numbers::e}});
  }

  // -- factorial contraction of Picard increments
  {
    const TimeGrid grid(1.0, 2000);
    const Ensemble ens = detail::extremes(unit, grid, 1, seed);
    const auto p = detail::problem_for("linear_ode", unit, grid);
    const auto [sol, rep] = picard_solve(p, ens, 1e-300, grid.steps(), {0.0, true});
    const RateFit fit = fit_factorial_rate(rep.increments, p.metadata.theta());
    double gap = 0.0;
    for (std::size_t n = 0; n <= 8 && n < rep.increments.size(); ++n) {
      const double ref = std::exp(-2.0 * std::lgamma(static_cast<double>(n) + 2.0));
      gap = std::max(gap, std::abs(rep.increments[n] - ref) / ref);
    }
    book.add("factorial_fit", fit.passed,
             {{"M", fit.constant("M")}, {"C", fit.constant("C")}, {"iterations", rep.iterations},
              {"max_relative_gap_to_continuum_n_le_8", gap}});
  }

  // -- hypothesis audits of the built-in families
  {
    SamplerConfig cfg;
    cfg.seed = seed;
    bool all = true;
    Json per = Json::object();
    for (const char* fam : {"zero", "linear_ode", "conv_cosh", "geometric", "singular_kernel", "log_modulus", "affine_param"}) {
      auto [f, m] = builtin_family(fam);
      const ClassAudit a = audit_family(f, m, cfg);
      double worst = 0.0;
      for (const auto& r : a.reports) worst = std::max(worst, r.max_ratio);
      per[fam] = {{"passed", a.passed}, {"max_ratio", detail::finite_or_null(worst)}};
      all = all && a.passed;
    }
    book.add("family_audits", all, {{"families", per}});

    auto [f, m] = builtin_family("linear_ode");
    if (inject == "lipschitz-violation") m.L_ts = [](double, double) { return 0.5; };
    const AuditReport lip = audit_lipschitz(f, m, cfg);
    book.add("lipschitz_audit_linear_ode", lip.passed, {{"max_ratio", detail::finite_or_null(lip.max_ratio)}});
  }

  // -- integral-Lipschitz regime
  {
    auto [f, m] = builtin_family("log_modulus");
    SamplerConfig cfg;
    cfg.seed = seed;
    const auto audit = audit_integral_lipschitz(f, m, cfg);
    const auto sqrt_probe = divergence_probe([](double u) { return std::sqrt(u); });
    const bool square_rejected = !modulus_is_concave_increasing([](double u) { return u * u; });
    book.add("integral_lipschitz_divergence", audit.passed && !sqrt_probe.diverges && square_rejected,
             {{"partial_sum", audit.divergence.final_sum},
              {"decay_exponent", audit.divergence.decay_exponent},
              {"psi_ratio", audit.audit.max_ratio},
              {"sqrt_control_sum", sqrt_probe.final_sum}});
    const TimeGrid grid(1.0, 200);
    const Ensemble ens = detail::extremes(unit, grid, 1, seed);
    const VolterraProblem p{f, m, grid, unit, 0.0};
    const auto [sol, rep] = picard_solve(p, ens, 1e-12, 200);
    bool monotone = true;
    for (std::size_t n = 3; n < rep.increments.size(); ++n)
      monotone = monotone && rep.increments[n] <= rep.increments[n - 1];
    book.add("integral_lipschitz_picard", rep.converged && monotone,
             {{"iterations", rep.iterations}, {"last_increment", rep.increments.back()}});
  }

  // -- parameter continuity
  {
    const GParams g(0.5, 1.0);
    const TimeGrid grid(1.0, 100);
    const Ensemble ens = detail::extremes(g, grid, 200, seed);
    const std::vector<double> alphas{0.0, 0.05, 0.1, 0.2, 0.4};
    SolverConfig sc;
    sc.fast_path = true;
    const auto full = parameter_continuity_study(detail::problem_for("affine_param", g, grid), alphas, ens, sc);
    book.add("parameter_slope", full.fit.passed,
             {{"slope", full.fit.constant("slope")}, {"gronwall_constant", detail::finite_or_null(full.gronwall_constant)}});
    const auto forcing =
        parameter_continuity_study(detail::problem_for("affine_param", g, grid, {{"forcing_only", 1.0}}), alphas, ens, sc);
    const double s = forcing.fit.constant("slope");
    book.add("parameter_slope_forcing_only", std::abs(s - 2.0) <= 1e-12 && forcing.bound_holds, {{"slope", s}});
  }

  // -- refining the lattice never lowers the worst case
  {
    const TimeGrid grid(1.0, 64);
    SolverConfig sc;
    sc.fast_path = true;
    const auto p = detail::problem_for("geometric", band, grid);
    const auto sq = [](std::span<const double> x, const Scenario&) { return x.back() * x.back(); };
    const Estimate coarse = solve_expect(p, generate_ensemble(band, grid, build_control_lattice(band, grid, 2, 1), 500, seed), sq, sc);
    const Estimate fine = solve_expect(p, generate_ensemble(band, grid, build_control_lattice(band, grid, 3, 2), 500, seed), sq, sc);
    book.add("monotone_in_lattice", fine.value >= coarse.value, {{"coarse", coarse.value}, {"fine", fine.value}});
  }

  // -- Hoelder exponent of B and mean-square continuity of a solution
  {
    const TimeGrid grid(1.0, 1024);
    const Ensemble ens = detail::extremes(unit, grid, 400, seed);
    const RateFit fit = holder_exponent(brownian_paths(ens), 4.0, ens, 1.0);
    const double ex = fit.constant("exponent");
    book.add("holder_brownian", ex >= 1.8 && ex <= 2.2, {{"exponent", ex}, {"c", fit.constant("c")}});
  }
  {
    const TimeGrid fine_grid(1.0, 1000);
    const Ensemble fine = detail::extremes(unit, fine_grid, 4000, seed);
    const Ensemble coarse = coarsen_ensemble(fine, 2);
    SolverConfig sc;
    sc.fast_path = true;
    const auto peak = [&](const Ensemble& e) {
      const auto prof = msq_continuity_profile(solve(detail::problem_for("geometric", unit, e.grid()), e, sc), e);
      double m = 0.0;
      for (const auto& r : prof) m = std::max(m, r.value);
      return m;
    };
    const double r = peak(fine) / peak(coarse);
    book.add("mean_square_continuity", r >= 0.375 && r <= 0.625, {{"ratio_fine_to_coarse", r}});
  }

  // -- inequality utilities and well-posedness
  {
    const auto lin = bihari_majorant([](double v) { return v; }, 1.0, 1.0);
    const auto tiny = bihari_majorant(log_concave_modulus, 1e-8, 1.0);
    const auto tinier = bihari_majorant(log_concave_modulus, 1e-16, 1.0);
    const bool ok = std::abs(lin.value - std::numbers::e) <= 1e-7 && tinier.value < tiny.value &&
                    gronwall_bound(1.0, 1.0, 1.0) == std::exp(1.0) && gronwall_bound(0.0, 5.0, 1.0) == 0.0;
    book.add("bihari_gronwall", ok, {{"bihari_linear", lin.value}, {"bihari_log_1e-8", tiny.value}, {"bihari_log_1e-16", tinier.value}});
  }
  {
    const TimeGrid grid(1.0, 50);
    const Ensemble ens = detail::extremes(band, grid, 2000, seed);
    const AdaptedProcess b = brownian_paths(ens);
    std::vector<double> xi(ens.size());
    for (std::size_t s = 0; s < ens.size(); ++s) xi[s] = b(s, 50) * b(s, 50);
    const auto j = jensen_gap([](double u) { return std::sqrt(u); }, xi, ens);
    book.add("jensen", j.holds, {{"lhs", j.lhs}, {"rhs", j.rhs}});
  }
  {
    const TimeGrid grid(1.0, 100);
    EnsembleOptions opt;
    opt.twin_branch_step = 50;
    const Ensemble ens = detail::extremes(band, grid, 32, seed, opt);
    WellPosednessConfig cfg;
    cfg.second_moment_ceiling = 10.0;
    const auto r = well_posedness_suite(detail::problem_for("linear_ode", band, grid), ens, cfg);
    book.add("well_posedness_linear_ode", r.passed,
             {{"sup_second_moment", r.sup_second_moment}, {"mg_norm_2", r.mg_norm_2}});
  }

  VerifyResult out;
  out.failed = book.failed();
  out.document = {{"master_seed", seed}, {"all_passed", out.failed.empty()}, {"failed", out.failed},
                  {"checks", book.checks()}};
  return out;
}

}  // namespace gsvie::cli
