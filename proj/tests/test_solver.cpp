#include <catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include "gsvie/solver.hpp"
#include "oracles.hpp"

using namespace gsvie;
using Catch::Matchers::ContainsSubstring;

namespace {

VolterraProblem problem(const std::string& family, double lo, double hi, std::size_t steps, FamilyParams fp = {},
                        double horizon = 1.0) {
  auto [f, m] = builtin_family(family, fp, horizon);
  return VolterraProblem{std::move(f), std::move(m), TimeGrid(horizon, steps), GParams(lo, hi), 0.0};
}

Ensemble ensemble(const VolterraProblem& p, std::size_t levels, std::size_t pieces, std::size_t m, std::uint64_t seed,
                  EnsembleOptions opt = {}) {
  return generate_ensemble(p.params, p.grid, build_control_lattice(p.params, p.grid, levels, pieces), m, seed, opt);
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("rhs evaluation") {
  const auto zp = problem("zero", 1.0, 2.0, 10, {{"phi", 0.7}});
  const Ensemble ze = ensemble(zp, 2, 1, 1, 3);
  const std::vector<double> junk(11, 123.0);
  for (std::size_t i = 0; i <= 10; ++i) CHECK(rhs_eval(zp, junk, ze.scenario(0), i) == 0.7);

  const auto lp = problem("linear_ode", 1.0, 2.0, 10);
  const Ensemble le = ensemble(lp, 2, 1, 1, 3);
  std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0};
  CHECK(rhs_eval(lp, x, le.scenario(1), 0) == 1.0);
  // 1 + dt (1 + 2 + 3 + 4)
  CHECK(rhs_eval(lp, x, le.scenario(1), 4) == Catch::Approx(1.0 + 0.1 * 10.0).epsilon(1e-15));
  CHECK_THROWS(rhs_eval(lp, std::span<const double>(x).first(3), le.scenario(0), 5));
}

TEST_CASE("direct solve against discrete and continuum oracles") {
  SECTION("linear_ode") {
    const auto p = problem("linear_ode", 1.0, 1.0, 2000);
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    const auto x = direct_solve(p, ens.scenario(0));
    for (std::size_t i = 0; i <= 2000; i += 97)
      CHECK(x[i] == Catch::Approx(std::pow(1.0 + 1.0 / 2000.0, static_cast<double>(i))).epsilon(1e-11));
    CHECK(std::abs(x.back() - std::numbers::e) < 5e-3);
  }
  SECTION("conv_cosh") {
    const auto p = problem("conv_cosh", 1.0, 1.0, 2000);
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    const auto x = direct_solve(p, ens.scenario(0));
    const auto ref = oracle::conv_cosh_discrete(2000, 1.0);
    for (std::size_t i = 0; i <= 2000; i += 111) CHECK(x[i] == Catch::Approx(static_cast<double>(ref[i])).epsilon(1e-11));
    CHECK(std::abs(x.back() - std::cosh(1.0)) < 5e-3);
  }
  SECTION("zero family") {
    const auto p = problem("zero", 1.0, 2.0, 50, {{"phi", -1.25}});
    const Ensemble ens = ensemble(p, 2, 2, 3, 1);
    const auto sol = direct_solve(p, ens);
    for (double v : sol.paths.data()) CHECK(v == -1.25);
  }
  SECTION("geometric path is a product of (1 + dB)") {
    const auto p = problem("geometric", 1.0, 2.0, 300);
    const Ensemble ens = ensemble(p, 2, 3, 2, 8);
    const auto sol = direct_solve(p, ens, true);
    for (std::size_t s = 0; s < ens.size(); ++s) {
      double prod = 1.0;
      for (std::size_t j = 0; j < 300; ++j) prod *= 1.0 + ens.scenario(s).dB(j);
      CHECK(sol.paths(s, 300) == Catch::Approx(prod).epsilon(1e-10));
    }
  }
}

TEST_CASE("fast path is bit-identical to the quadratic path") {
  for (const char* name : {"zero", "linear_ode", "geometric", "log_modulus", "affine_param"}) {
    CAPTURE(name);
    auto p = problem(name, 1.0, 2.0, 120);
    p.alpha = 0.3;
    const Ensemble ens = ensemble(p, 2, 2, 3, 11);
    const auto slow = direct_solve(p, ens, false);
    const auto fast = direct_solve(p, ens, true);
    CHECK(same_bits(slow.paths.data(), fast.paths.data()));
    const auto ps = picard_solve(p, ens, 1e-300, 120, {0.0, false}).first;
    const auto pf = picard_solve(p, ens, 1e-300, 120, {0.0, true}).first;
    CHECK(same_bits(ps.paths.data(), pf.paths.data()));
  }
}

TEST_CASE("Picard iteration") {
  SECTION("zero family converges after one sweep") {
    const auto p = problem("zero", 1.0, 2.0, 20);
    const Ensemble ens = ensemble(p, 2, 1, 4, 1);
    const auto [sol, rep] = picard_solve(p, ens, 1e-10, 20);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    REQUIRE(rep.increments.size() == 1);
    CHECK(rep.increments[0] == 0.0);
  }
  SECTION("linear_ode increments equal the discrete closed form") {
    const std::size_t n = 400;
    const auto p = problem("linear_ode", 1.0, 1.0, n);
    const Ensemble ens = ensemble(p, 2, 1, 2, 1);
    const auto [sol, rep] = picard_solve(p, ens, 1e-30, n);
    CHECK(rep.converged);
    // compare sup|X_{n+1} - X_n| with room for the rounding of N sums of size e
    const double floor = static_cast<double>(n) * 4.0 * std::numeric_limits<double>::epsilon() * std::numbers::e;
    for (std::size_t k = 0; k < rep.increments.size(); ++k) {
      const double ref = std::sqrt(oracle::linear_ode_discrete_increment(n, 1.0, k));
      CAPTURE(k);
      CHECK(std::abs(std::sqrt(rep.increments[k]) - ref) <= 1e-9 * ref + floor);
    }
    // ratios d_{n+1}/d_n fall towards zero while above the rounding floor
    for (std::size_t k = 2; k + 1 < rep.increments.size() && rep.increments[k + 1] > 1e6 * floor * floor; ++k)
      CHECK(rep.increments[k + 1] / rep.increments[k] < rep.increments[k] / rep.increments[k - 1]);
  }
  SECTION("linear_ode increments approach the Taylor remainders as dt shrinks") {
    double prev_gap = INFINITY;
    for (std::size_t n : {250u, 1000u, 4000u}) {
      const double gap = std::abs(oracle::linear_ode_discrete_increment(n, 1.0, 3) / oracle::linear_ode_taylor_increment(1.0, 3) - 1.0);
      CHECK(gap < prev_gap);
      prev_gap = gap;
    }
  }
  SECTION("max_iter >= N reproduces direct_solve bit for bit") {
    for (const char* name : {"linear_ode", "conv_cosh", "geometric", "singular_kernel", "log_modulus"}) {
      CAPTURE(name);
      const auto p = problem(name, 1.0, 2.0, 60);
      const Ensemble ens = ensemble(p, 2, 2, 3, 5);
      const auto direct = direct_solve(p, ens);
      const auto [pic, rep] = picard_solve(p, ens, 1e-300, 61);
      CHECK(same_bits(direct.paths.data(), pic.paths.data()));
      CHECK(rep.increments.back() == 0.0);
    }
  }
  SECTION("non-convergence is reported") {
    const auto p = problem("linear_ode", 1.0, 1.0, 100);
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    const auto [sol, rep] = picard_solve(p, ens, 1e-10, 3);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iterations == 3);
    CHECK(rep.increments.size() == 3);
    for (double d : rep.increments) CHECK(d >= 0.0);
  }
  SECTION("argument checks") {
    const auto p = problem("linear_ode", 1.0, 1.0, 10);
    const Ensemble ens = ensemble(p, 2, 1, 1, 1);
    CHECK_THROWS(picard_solve(p, ens, 0.0, 5));
    CHECK_THROWS(picard_solve(p, ens, 1e-6, 0));
    const auto other = problem("linear_ode", 1.0, 1.0, 12);
    CHECK_THROWS(picard_solve(other, ens, 1e-6, 5));
  }
}

TEST_CASE("Picard limits from different starts coincide") {
  const auto p = problem("geometric", 1.0, 2.0, 80);
  const Ensemble ens = ensemble(p, 2, 2, 16, 4);
  const auto a = picard_solve(p, ens, 1e-12, 200, {0.0, false}).first;
  const auto b = picard_solve(p, ens, 1e-12, 200, {1.0, false}).first;
  double scale = 0.0;
  for (double v : a.paths.data()) scale = std::max(scale, std::abs(v));
  const double ulp = 10.0 * scale * std::numeric_limits<double>::epsilon();
  CHECK(sup_msq_distance(a.paths, b.paths, ens) <= std::max(1e-12, ulp * ulp));
}

TEST_CASE("coefficient failures carry their location") {
  auto p = problem("linear_ode", 1.0, 1.0, 20);
  p.family.b = [](double, double s, double x, double) { return s > 0.3 ? NAN : x; };
  const Ensemble ens = ensemble(p, 2, 1, 1, 1);
  CHECK_THROWS_AS(direct_solve(p, ens.scenario(0)), NonFiniteError);
  CHECK_THROWS_WITH(direct_solve(p, ens.scenario(0)), ContainsSubstring("i=8") && ContainsSubstring("j=7"));
}

TEST_CASE("solutions are adapted") {
  EnsembleOptions opt;
  opt.twin_branch_step = 25;
  const auto p = problem("geometric", 1.0, 2.0, 50);
  const Ensemble ens = ensemble(p, 2, 2, 4, 6, opt);
  const auto sol = direct_solve(p, ens);
  for (std::size_t i = 0; i <= 50; ++i) CHECK(adaptedness_probe(sol.paths, ens, i));
  for (std::size_t s = 0; s < ens.size(); ++s) CHECK(sol.paths(s, 0) == 1.0);
}

TEST_CASE("solve_expect") {
  const auto sq = [](std::span<const double> x, const Scenario&) { return x.back() * x.back(); };
  SECTION("geometric, classical band") {
    const std::size_t n = 500;
    const auto p = problem("geometric", 1.0, 1.0, n);
    const Ensemble ens = ensemble(p, 2, 1, 4000, 12);
    REQUIRE(ens.control_count() == 1);
    SolverConfig cfg;
    cfg.fast_path = true;
    const Estimate e = solve_expect(p, ens, sq, cfg);
    // E X_N^2 = (1 + dt)^N on the grid
    CHECK(std::abs(e.value - std::pow(1.0 + 1.0 / n, n)) <= 3.0 * e.std_error());
    CHECK(std::abs(std::pow(1.0 + 1.0 / n, n) - std::numbers::e) < 3e-3);
    // same draws through a single-measure Monte Carlo
    std::vector<double> plain;
    for (std::size_t r = 0; r < 4000; ++r) {
      const auto sc = simulate_scenario(ens.control(0), p.grid, 12, r);
      const auto x = direct_solve(p, sc, true);
      plain.push_back(x.back() * x.back());
    }
    CHECK(e.value == sample_moments(plain).mean);
  }
  SECTION("geometric, upper band") {
    const std::size_t n = 200;
    const auto p = problem("geometric", 1.0, 2.0, n);
    const Ensemble ens = ensemble(p, 2, 1, 4000, 13);
    SolverConfig cfg;
    cfg.fast_path = true;
    const Estimate e = solve_expect(p, ens, sq, cfg);
    CHECK(std::abs(e.value - std::pow(1.0 + 4.0 / n, n)) <= 3.0 * e.std_error());
    CHECK(ens.control(e.argmax_control).density(0) == 4.0);
  }
  SECTION("zero family terminal value") {
    const auto p = problem("zero", 1.0, 2.0, 30, {{"phi", 2.5}});
    const Ensemble ens = ensemble(p, 2, 2, 7, 1);
    const Estimate e = solve_expect(p, ens, [](std::span<const double> x, const Scenario&) { return x.back(); });
    CHECK(e.value == 2.5);
  }
  SECTION("refining the lattice never lowers the value") {
    const auto p = problem("geometric", 1.0, 2.0, 24);
    const Ensemble coarse = ensemble(p, 2, 2, 50, 3);
    const Ensemble fine = ensemble(p, 3, 4, 50, 3);
    const auto payoff = [](std::span<const double> x, const Scenario&) { return std::sin(3.0 * x.back()); };
    CHECK(solve_expect(p, fine, payoff).value >= solve_expect(p, coarse, payoff).value);
  }
}

TEST_CASE("mean-square continuity profile") {
  SECTION("zero family is flat") {
    const auto p = problem("zero", 1.0, 2.0, 16);
    const Ensemble ens = ensemble(p, 2, 1, 3, 1);
    for (const auto& row : msq_continuity_profile(direct_solve(p, ens), ens)) CHECK(row.value == 0.0);
  }
  SECTION("geometric, classical band: (1 + dt)^i dt") {
    const std::size_t n = 100;
    const auto p = problem("geometric", 1.0, 1.0, n);
    const Ensemble ens = ensemble(p, 2, 1, 20000, 2);
    const auto sol = direct_solve(p, ens, true);
    const auto rows = msq_continuity_profile(sol, ens);
    REQUIRE(rows.size() == n);
    for (std::size_t i : {0u, 10u, 50u, 99u}) {
      std::vector<double> v(ens.size());
      for (std::size_t s = 0; s < ens.size(); ++s) {
        const double d = sol.paths(s, i + 1) - sol.paths(s, i);
        v[s] = d * d;
      }
      const Estimate e = estimate_values(v, ens);
      CHECK(rows[i].value == e.value);
      CHECK(std::abs(e.value - std::pow(1.0 + 0.01, static_cast<double>(i)) * 0.01) <= 3.0 * e.std_error());
    }
  }
  SECTION("linear_ode increments are O(dt^2)") {
    for (std::size_t n : {100u, 400u}) {
      const auto p = problem("linear_ode", 1.0, 1.0, n);
      const Ensemble ens = ensemble(p, 2, 1, 1, 1);
      const auto rows = msq_continuity_profile(direct_solve(p, ens), ens);
      const double dt = 1.0 / static_cast<double>(n);
      for (const auto& row : rows) CHECK(row.value <= std::numbers::e * std::numbers::e * dt * dt);
    }
  }
}
