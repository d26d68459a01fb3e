#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "gsvie/analysis.hpp"
#include "oracles.hpp"

using namespace gsvie;

namespace {

VolterraProblem problem(const std::string& family, double lo, double hi, std::size_t steps, FamilyParams fp = {}) {
  auto [f, m] = builtin_family(family, fp, 1.0);
  return VolterraProblem{std::move(f), std::move(m), TimeGrid(1.0, steps), GParams(lo, hi), 0.0};
}

Ensemble ensemble(const VolterraProblem& p, std::size_t levels, std::size_t pieces, std::size_t m, std::uint64_t seed,
                  EnsembleOptions opt = {}) {
  return generate_ensemble(p.params, p.grid, build_control_lattice(p.params, p.grid, levels, pieces), m, seed, opt);
}

}  // namespace

TEST_CASE("Gronwall bound") {
  CHECK(gronwall_bound(0.0, 5.0, 1.0) == 0.0);
  CHECK(gronwall_bound(1.0, 0.0, 7.0) == 1.0);
  CHECK(gronwall_bound(1.0, 1.0, 1.0) == Catch::Approx(std::numbers::e).epsilon(1e-15));
  CHECK(gronwall_bound(2.5, 3.0, 0.0) == 2.5);
  CHECK(gronwall_bound(1.0, 1.0, 1.0) < gronwall_bound(1.1, 1.0, 1.0));
  CHECK(gronwall_bound(1.0, 1.0, 1.0) < gronwall_bound(1.0, 1.1, 1.0));
  CHECK(gronwall_bound(1.0, 1.0, 1.0) < gronwall_bound(1.0, 1.0, 1.1));
  CHECK_THROWS(gronwall_bound(-1.0, 1.0, 1.0));
}

TEST_CASE("Bihari majorant") {
  const Modulus lin = [](double v) { return v; };
  SECTION("linear modulus") {
    CHECK(bihari_majorant(lin, 1.0, 1.0).value == Catch::Approx(std::numbers::e).epsilon(1e-8));
    CHECK(bihari_majorant(lin, 1e-12, 1.0).value == Catch::Approx(std::numbers::e * 1e-12).epsilon(1e-8));
    CHECK(bihari_majorant(lin, 0.0, 1.0).value == 0.0);
  }
  SECTION("log modulus against its closed form") {
    const Modulus ell = log_concave_modulus;
    for (double v0 : {1e-8, 1e-4, 1e-2}) {
      const double ref = oracle::bihari_log_closed_form(v0, 1.0);
      REQUIRE(ref <= 1.0 / std::numbers::e);
      CHECK(bihari_majorant(ell, v0, 1.0).value == Catch::Approx(ref).epsilon(1e-7));
    }
  }
  SECTION("log modulus majorant goes to zero with v0") {
    const Modulus ell = log_concave_modulus;
    double v0 = 1e-8;
    double prev = bihari_majorant(ell, v0, 1.0).value;
    for (int k = 0; k < 40; ++k) {
      v0 *= 0.5;
      const double next = bihari_majorant(ell, v0, 1.0).value;
      CHECK(next < prev);
      prev = next;
    }
    CHECK(prev < 1e-6);
  }
  SECTION("monotone in the modulus") {
    const Modulus bigger = [](double v) { return 1.5 * v; };
    CHECK(bihari_majorant(bigger, 0.3, 1.0).value > bihari_majorant(lin, 0.3, 1.0).value);
  }
  SECTION("superlinear modulus blows up") {
    const auto r = bihari_majorant([](double v) { return v * v; }, 1.0, 2.0);
    CHECK(r.blew_up);
    CHECK(std::isinf(r.value));
    CHECK(r.blow_up_time == Catch::Approx(1.0).margin(1e-3));
    CHECK_FALSE(bihari_majorant([](double v) { return v * v; }, 1.0, 0.5).blew_up);
  }
}

TEST_CASE("Jensen gap") {
  const auto p = problem("zero", 1.0, 2.0, 50);
  const Ensemble ens = ensemble(p, 2, 1, 2000, 7);
  std::vector<double> bt2(ens.size()), c(ens.size(), 2.25);
  for (std::size_t s = 0; s < ens.size(); ++s) {
    const double b = ens.scenario(s).path().back();
    bt2[s] = b * b;
  }
  SECTION("affine") {
    const auto r = jensen_gap([](double u) { return 2.0 * u + 1.0; }, bt2, ens);
    CHECK(r.lhs == Catch::Approx(r.rhs).epsilon(1e-12));
    CHECK(r.holds);
  }
  SECTION("square root of B_T^2") {
    const auto r = jensen_gap([](double u) { return std::sqrt(u); }, bt2, ens);
    CHECK(r.holds);
    CHECK(r.lhs < r.rhs);
  }
  SECTION("constant") {
    const auto r = jensen_gap([](double u) { return std::sqrt(u); }, c, ens);
    CHECK(r.lhs == 1.5);
    CHECK(r.rhs == 1.5);
  }
}

TEST_CASE("factorial rate fit") {
  SECTION("linear_ode increments") {
    const std::size_t n = 1000;
    const auto p = problem("linear_ode", 1.0, 1.0, n);
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    const auto [sol, rep] = picard_solve(p, ens, 1e-28, n);
    const RateFit fit = fit_factorial_rate(rep.increments, p.metadata.theta());
    CHECK(fit.passed);
    CHECK(fit.violations.empty());
    CHECK(std::isfinite(fit.constant("M")));
    CHECK(fit.constant("theta") == Catch::Approx(1.0 / 3.0));
    // the measured increments sit on the discrete closed form; its gap to the
    // continuum remainder is 1 - prod_{k<=n} (1 - k/N)^2
    for (std::size_t k = 0; k <= 8; ++k) {
      double prod = 1.0;
      for (std::size_t q = 1; q <= k; ++q) prod *= 1.0 - static_cast<double>(q) / n;
      const double gap = rep.increments[k] / oracle::linear_ode_taylor_increment(1.0, k) - 1.0;
      CHECK(gap == Catch::Approx(prod * prod - 1.0).margin(1e-9));
    }
  }
  SECTION("zero increments pass trivially") {
    const std::vector<double> d{0.0};
    CHECK(fit_factorial_rate(d, 1.0 / 3.0).passed);
  }
  SECTION("a strongly expanding fixture cut short fails") {
    const auto p = problem("linear_ode", 1.0, 1.0, 200, {{"rate", 100.0}});
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    const auto [sol, rep] = picard_solve(p, ens, 1e-10, 6);
    CHECK_FALSE(rep.converged);
    const RateFit fit = fit_factorial_rate(rep.increments, p.metadata.theta());
    CHECK_FALSE(fit.passed);
    for (double r : fit.residuals) CHECK(std::isfinite(r));
  }
  SECTION("rejects negative increments") {
    const std::vector<double> d{1.0, -1.0};
    CHECK_THROWS(fit_factorial_rate(d, 0.3));
  }
}

TEST_CASE("Hoelder exponent") {
  SECTION("Brownian motion, fourth moment") {
    const auto p = problem("zero", 1.0, 1.0, 1024);
    const Ensemble ens = ensemble(p, 2, 1, 400, 3);
    const RateFit fit = holder_exponent(brownian_paths(ens), 4.0, ens);
    CHECK(fit.constant("exponent") == Catch::Approx(2.0).margin(0.15));
    CHECK(fit.constant("c") == Catch::Approx(3.0).epsilon(0.15));
    CHECK(fit.passed);
    // dyadic lags up to 2^(log2 N - 2)
    CHECK(fit.points.size() == 9);
    const RateFit again = holder_exponent(brownian_paths(ens), 4.0, ens);
    CHECK(again.constant("exponent") == fit.constant("exponent"));
  }
  SECTION("deterministic linear path") {
    const auto p = problem("zero", 1.0, 2.0, 256);
    const Ensemble ens = ensemble(p, 2, 1, 3, 3);
    const RateFit fit = holder_exponent(deterministic_process(ens, [](double t) { return 3.0 * t; }), 2.0, ens);
    CHECK(fit.constant("exponent") == Catch::Approx(2.0).epsilon(1e-9));
    CHECK(fit.constant("c") == Catch::Approx(9.0).epsilon(1e-9));
  }
  SECTION("singular kernel solution") {
    const auto p = problem("singular_kernel", 1.0, 1.0, 512);
    const Ensemble ens = ensemble(p, 2, 1, 200, 5);
    const auto sol = direct_solve(p, ens);
    const RateFit fit = holder_exponent(sol.paths, p.metadata.moment_power(), ens);
    CHECK(fit.constant("exponent") >= 1.0);
  }
}

TEST_CASE("parameter continuity") {
  SECTION("forcing only: distance is |a - b|^2") {
    const auto p = problem("affine_param", 1.0, 2.0, 40, {{"forcing_only", 1.0}});
    const Ensemble ens = ensemble(p, 2, 1, 10, 1);
    const std::vector<double> alphas{0.0, 0.05, 0.1, 0.2, 0.4};
    const auto st = parameter_continuity_study(p, alphas, ens);
    for (const auto& pr : st.pairs)
      CHECK(pr.distance == Catch::Approx((pr.alpha - pr.beta) * (pr.alpha - pr.beta)).epsilon(1e-12));
    CHECK(st.fit.constant("slope") == Catch::Approx(2.0).epsilon(1e-9));
    CHECK(st.fit.passed);
    CHECK(st.bound_holds);
  }
  SECTION("equal parameters give zero distance") {
    const auto p = problem("affine_param", 1.0, 2.0, 40);
    const Ensemble ens = ensemble(p, 2, 1, 10, 1);
    const std::vector<double> alphas{0.3, 0.3, 0.1};
    const auto st = parameter_continuity_study(p, alphas, ens);
    CHECK(st.pairs[0].distance == 0.0);
  }
  SECTION("full affine family") {
    const auto p = problem("affine_param", 0.5, 1.0, 100);
    const Ensemble ens = ensemble(p, 2, 1, 200, 9);
    const std::vector<double> alphas{0.0, 0.1, 0.2, 0.4};
    const auto st = parameter_continuity_study(p, alphas, ens);
    CHECK(st.fit.constant("slope") == Catch::Approx(2.0).margin(0.1));
    CHECK(std::isfinite(st.gronwall_constant));
    CHECK(st.bound_holds);
    CHECK(st.fit.passed);
  }
  SECTION("requires a parameterized family") {
    const auto p = problem("linear_ode", 1.0, 1.0, 10);
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    const std::vector<double> alphas{0.0, 1.0};
    CHECK_THROWS(parameter_continuity_study(p, alphas, ens));
  }
}

TEST_CASE("well-posedness suite") {
  EnsembleOptions opt;
  opt.twin_branch_step = 50;
  SECTION("zero family") {
    const auto p = problem("zero", 1.0, 2.0, 100);
    const Ensemble ens = ensemble(p, 2, 2, 20, 2, opt);
    const auto r = well_posedness_suite(p, ens);
    CHECK(r.passed);
    CHECK(r.mg_norm_2 == 0.0);
    CHECK(r.sup_second_moment == 1.0);
  }
  SECTION("linear_ode") {
    const auto p = problem("linear_ode", 1.0, 2.0, 100);
    const Ensemble ens = ensemble(p, 2, 2, 4, 2, opt);
    WellPosednessConfig cfg;
    cfg.second_moment_ceiling = 10.0;
    const auto r = well_posedness_suite(p, ens, cfg);
    CHECK(r.passed);
    CHECK(r.sup_second_moment == Catch::Approx(std::pow(1.01, 200.0)).epsilon(1e-12));
    CHECK(std::abs(r.sup_second_moment - std::exp(2.0)) < 0.1);
  }
  SECTION("geometric with the upper band") {
    const std::size_t n = 200;
    const auto p = problem("geometric", 1.0, 2.0, n);
    const Ensemble ens = ensemble(p, 2, 1, 4000, 17, opt);
    SolverConfig fast;
    fast.fast_path = true;
    WellPosednessConfig cfg;
    cfg.solver = fast;
    const auto r = well_posedness_suite(p, ens, cfg);
    CHECK(r.adapted_stochastic);
    CHECK(r.adapted_drift);
    CHECK(r.norms_finite);
    const Estimate e = solve_expect(
        p, ens, [](std::span<const double> x, const Scenario&) { return x.back() * x.back(); }, fast);
    CHECK(std::abs(r.sup_second_moment - std::pow(1.0 + 4.0 / n, n)) <= 3.0 * e.std_error());
  }
}
