#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "gsvie/expectation.hpp"
#include "gsvie/gcore.hpp"

using namespace gsvie;
using Catch::Matchers::ContainsSubstring;

namespace {

Ensemble make(double lo, double hi, std::size_t steps, std::size_t levels, std::size_t pieces, std::size_t m,
              std::uint64_t seed, EnsembleOptions opt = {}) {
  const GParams g(lo, hi);
  const TimeGrid grid(1.0, steps);
  return generate_ensemble(g, grid, build_control_lattice(g, grid, levels, pieces), m, seed, opt);
}

double terminal_b(const Scenario& sc) {
  double b = 0.0;
  for (std::size_t j = 0; j < sc.steps(); ++j) b += sc.dB(j);
  return b;
}

}  // namespace

TEST_CASE("estimate of simple payoffs") {
  const Ensemble ens = make(1.0, 2.0, 50, 2, 1, 4000, 5);

  SECTION("constants are preserved exactly") {
    const Estimate e = estimate([](const Scenario&) { return 3.5; }, ens);
    CHECK(e.value == 3.5);
    for (const auto& c : e.per_control) {
      CHECK(c.mean == 3.5);
      CHECK(c.std_error == 0.0);
      CHECK(c.replicas == 4000);
    }
    CHECK(lower_expectation([](const Scenario&) { return 3.5; }, ens).value == 3.5);
  }
  SECTION("B(T) has zero upper expectation") {
    const Estimate e = estimate(terminal_b, ens);
    CHECK(std::abs(e.value) <= 3.0 * e.std_error());
  }
  SECTION("B(T)^2 is maximized by the upper constant control") {
    const auto sq = [](const Scenario& sc) { return terminal_b(sc) * terminal_b(sc); };
    const Estimate up = estimate(sq, ens);
    CHECK(std::abs(up.value - 4.0) <= 3.0 * up.std_error());
    CHECK(ens.control(up.argmax_control).density(0) == 4.0);
    const Estimate lo = lower_expectation(sq, ens);
    CHECK(std::abs(lo.value - 1.0) <= 3.0 * lo.std_error());
    CHECK(lo.value <= up.value);
  }
  SECTION("non-finite payoffs name the scenario") {
    CHECK_THROWS_AS(estimate([](std::size_t s, const Scenario&) { return s == 4001 ? NAN : 0.0; }, ens), NonFiniteError);
    CHECK_THROWS_WITH(estimate([](std::size_t s, const Scenario&) { return s == 4001 ? NAN : 0.0; }, ens),
                      ContainsSubstring("scenario 4001") && ContainsSubstring("control 1") &&
                          ContainsSubstring("replica 1"));
  }
}

TEST_CASE("estimator satisfies the sublinear axioms exactly") {
  const Ensemble ens = make(1.0, 2.0, 16, 3, 2, 40, 77);
  rng::Stream st(3, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = st.uniform(-2, 2), b = st.uniform(-2, 2), c = st.uniform(0, 5);
    std::vector<double> x(ens.size()), y(ens.size()), sum(ens.size()), scaled(ens.size()), bigger(ens.size());
    for (std::size_t s = 0; s < ens.size(); ++s) {
      const double bt = terminal_b(ens.scenario(s));
      x[s] = a * bt * bt + bt;
      y[s] = std::sin(b * bt);
      sum[s] = x[s] + y[s];
      scaled[s] = c * x[s];
      bigger[s] = x[s] + std::abs(y[s]);
    }
    const double ex = estimate_values(x, ens).value, ey = estimate_values(y, ens).value;
    CHECK(estimate_values(sum, ens).value <= ex + ey + 1e-12 * (1 + std::abs(ex) + std::abs(ey)));
    CHECK(estimate_values(scaled, ens).value == Catch::Approx(c * ex).epsilon(1e-12).margin(1e-14));
    CHECK(estimate_values(bigger, ens).value >= ex);
    CHECK(lower_expectation_values(x, ens).value <= ex);
  }
}

TEST_CASE("refining the lattice never lowers the estimate") {
  const GParams g(1.0, 2.0);
  const TimeGrid grid(1.0, 12);
  const auto coarse = build_control_lattice(g, grid, 2, 2);
  auto fine = build_control_lattice(g, grid, 3, 4);
  // levels 2 -> 3 keeps the endpoints, 2 pieces -> 4 pieces refines the blocks
  for (const auto& c : coarse) REQUIRE(std::find(fine.begin(), fine.end(), c) != fine.end());
  const Ensemble a = generate_ensemble(g, grid, coarse, 30, 5);
  const Ensemble b = generate_ensemble(g, grid, fine, 30, 5);
  const auto payoff = [](const Scenario& sc) {
    const auto p = sc.path();
    double acc = 0.0;
    for (double v : p) acc += std::cos(v) * v;
    return acc;
  };
  CHECK(estimate(payoff, b).value >= estimate(payoff, a).value);
}

TEST_CASE("stochastic integrals") {
  const Ensemble ens = make(1.0, 2.0, 40, 2, 2, 3, 1);
  const Scenario& sc = ens.scenario(5);
  const std::vector<double> one(41, 1.0), zero(41, 0.0);
  const auto ib = stochastic_integral(one, sc, Integrator::dB);
  const auto b = sc.path();
  for (std::size_t i = 0; i <= 40; ++i) CHECK(ib[i] == Catch::Approx(b[i]).margin(1e-14));
  const auto iq = stochastic_integral(one, sc, Integrator::dQV);
  double qv = 0.0;
  for (std::size_t i = 0; i <= 40; ++i) {
    CHECK(iq[i] == Catch::Approx(qv).margin(1e-14));
    if (i < 40) qv += sc.control().density(i) * sc.dt();
  }
  for (double v : stochastic_integral(zero, sc, Integrator::dB)) CHECK(v == 0.0);
  CHECK_THROWS(stochastic_integral(std::vector<double>(7, 1.0), sc, Integrator::dB));
}

TEST_CASE("mean-square distances and norms") {
  const Ensemble ens = make(1.0, 2.0, 64, 2, 1, 4000, 9);
  const AdaptedProcess b = brownian_paths(ens);
  const AdaptedProcess zero = constant_process(ens, 0.0);

  CHECK(sup_msq_distance(b, b, ens) == 0.0);
  AdaptedProcess shifted = b;
  for (std::size_t s = 0; s < ens.size(); ++s)
    for (std::size_t i = 0; i <= 64; ++i) shifted(s, i) += 0.75;
  CHECK(sup_msq_distance(shifted, b, ens) == Catch::Approx(0.5625).epsilon(1e-12));

  const auto profile = msq_distance_profile(b, zero, ens);
  std::vector<double> bt2(ens.size());
  for (std::size_t s = 0; s < ens.size(); ++s) bt2[s] = b(s, 64) * b(s, 64);
  const double se = estimate_values(bt2, ens).std_error();
  CHECK(std::abs(sup_msq_distance(b, zero, ens) - 4.0) <= 3.0 * se + 0.05);
  CHECK(std::abs(profile.back() - 4.0) <= 3.0 * se);

  CHECK(mg_norm(constant_process(ens, 2.5), 3.0, ens) == Catch::Approx(2.5).epsilon(1e-12));
  CHECK(mg_norm(zero, 2.0, ens) == 0.0);
  // left-endpoint sum of 4 t_i dt over i < N
  const double discrete = std::sqrt(2.0 * (1.0 - 1.0 / 64.0));
  std::vector<double> v(ens.size());
  for (std::size_t s = 0; s < ens.size(); ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 64; ++i) acc += b(s, i) * b(s, i) / 64.0;
    v[s] = acc;
  }
  const Estimate e = estimate_values(v, ens);
  const double norm = mg_norm(b, 2.0, ens);
  CHECK(norm * norm == Catch::Approx(e.value).epsilon(1e-12));
  CHECK(std::abs(e.value - discrete * discrete) <= 3.0 * e.std_error());
  CHECK(std::abs(norm - std::sqrt(2.0)) < 0.05);
  CHECK_THROWS(mg_norm(b, 0.5, ens));
}

TEST_CASE("isometry report") {
  SECTION("unit integrand with a nondegenerate band") {
    const Ensemble ens = make(1.0, 2.0, 100, 2, 1, 2000, 21);
    const auto rep = ito_isometry_report(constant_process(ens, 1.0), ens);
    CHECK(rep.rhs == Catch::Approx(4.0).epsilon(1e-12));
    CHECK(rep.mid == Catch::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(rep.lhs - 4.0) <= 3.0 * rep.lhs_se);
    CHECK(rep.isometry_holds);
    CHECK(rep.bound_holds);
  }
  SECTION("zero integrand") {
    const Ensemble ens = make(1.0, 2.0, 10, 2, 1, 10, 21);
    const auto rep = ito_isometry_report(constant_process(ens, 0.0), ens);
    CHECK(rep.lhs == 0.0);
    CHECK(rep.mid == 0.0);
    CHECK(rep.rhs == 0.0);
  }
  SECTION("classical case") {
    const Ensemble ens = make(1.0, 1.0, 100, 2, 1, 4000, 4);
    const auto rep = ito_isometry_report(constant_process(ens, 1.0), ens);
    CHECK(rep.mid == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(rep.rhs == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(rep.lhs - 1.0) <= 3.0 * rep.lhs_se);
  }
  SECTION("bounded adapted integrand") {
    const Ensemble ens = make(1.0, 2.0, 100, 2, 2, 2000, 8);
    const AdaptedProcess b = brownian_paths(ens);
    AdaptedProcess eta = b;
    for (std::size_t s = 0; s < ens.size(); ++s)
      for (std::size_t i = 0; i <= 100; ++i) eta(s, i) = std::sin(b(s, i));
    const auto rep = ito_isometry_report(eta, ens);
    CHECK(rep.isometry_holds);
    CHECK(rep.bound_holds);
  }
}

TEST_CASE("Doob surrogate") {
  SECTION("zero integrand") {
    const Ensemble ens = make(1.0, 2.0, 10, 2, 1, 10, 2);
    const auto rep = maximal_inequality_report(constant_process(ens, 0.0), ens);
    CHECK(rep.sup_moment == 0.0);
    CHECK(rep.doob_bound == 0.0);
  }
  SECTION("classical Brownian motion") {
    const Ensemble ens = make(1.0, 1.0, 100, 2, 1, 4000, 3);
    const auto rep = maximal_inequality_report(constant_process(ens, 1.0), ens);
    CHECK(rep.sup_moment >= 1.0 - 3.0 * rep.sup_moment_se);
    CHECK(rep.sup_moment <= 4.0 + 3.0 * rep.sup_moment_se);
    CHECK(rep.holds);
  }
  SECTION("bound arithmetic") {
    const Ensemble ens = make(1.0, 2.0, 64, 2, 1, 5, 3);
    CHECK(maximal_inequality_report(constant_process(ens, 1.0), ens).doob_bound == 16.0);
  }
}

TEST_CASE("adaptedness probe") {
  EnsembleOptions opt;
  opt.twin_branch_step = 10;
  const Ensemble ens = make(1.0, 2.0, 20, 2, 2, 6, 13, opt);
  const AdaptedProcess b = brownian_paths(ens);
  for (std::size_t i = 0; i <= 20; ++i) CHECK(adaptedness_probe(b, ens, i));
  CHECK(adaptedness_probe(deterministic_process(ens, [](double t) { return t * t; }), ens, 7));
  const AdaptedProcess peek = make_process(ens, [](std::size_t, const Scenario& sc, std::span<double> row) {
    for (std::size_t i = 0; i < sc.steps(); ++i) row[i] = sc.dW(i);
  });
  // twins share dW_j for j < 10, so the look-ahead is invisible until step 10
  CHECK(adaptedness_probe(peek, ens, 9));
  CHECK_FALSE(adaptedness_probe(peek, ens, 10));
  CHECK_THROWS(adaptedness_probe(b, ens, 21));
}
