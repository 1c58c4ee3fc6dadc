#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cesmarket/errors.hpp"
#include "cesmarket/pricing.hpp"
#include "cesmarket/solver.hpp"
#include "oracles.hpp"

using namespace cesmarket;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::EmptyInput;
}

Instance water_market(double rho) {
  return Instance({Valuation::linear({1.0}), Valuation::linear({6.0}), Valuation::linear({5.0})}, rho);
}

Allocation column(std::vector<double> x) {
  Allocation a(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) a(i, 0) = x[i];
  return a;
}

const double kRootQ = 2 * std::sqrt(3.0);

}  // namespace

TEST_CASE("pricing rule examples") {
  const PricingRule sq = make_pricing_rule({kRootQ}, 0.5, 1.0);
  const double half = 0.5;
  CHECK(sq.price(Bundle(&half, 1)) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(sq.scale() == doctest::Approx(0.5));

  const PricingRule lin = make_pricing_rule({3.0, 4.0}, 1.0, 1.0);
  const std::vector<double> ones{1.0, 1.0};
  CHECK(lin(ones) == 7.0);
  const auto mp = lin.marginal_prices(ones);
  CHECK(mp[0] == 3.0);
  CHECK(mp[1] == 4.0);

  const std::vector<double> zero{0.0, 0.0};
  CHECK(make_pricing_rule({1.0, 2.0}, 0.3, 0.6)(zero) == 0.0);
}

TEST_CASE("pricing rule rejects bad parameters") {
  CHECK(kind_of([] { make_pricing_rule({1.0}, 0.0, 1.0); }) == ErrorKind::BadParameter);
  CHECK(kind_of([] { make_pricing_rule({1.0}, 1.5, 1.0); }) == ErrorKind::BadParameter);
  CHECK(kind_of([] { make_pricing_rule({1.0}, 0.5, 0.0); }) == ErrorKind::BadParameter);
  CHECK(kind_of([] { make_pricing_rule({-1.0}, 0.5, 1.0); }) == ErrorKind::BadParameter);
}

TEST_CASE("property: pricing rule is convex and nondecreasing") {
  oracle::Gen g(51);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    std::vector<double> q(m);
    for (double& e : q) e = g.uniform(0.0, 4.0);
    const PricingRule p = make_pricing_rule(q, g.uniform(0.1, 1.0), g.uniform(0.1, 1.0));
    const auto x = g.interior_bundle(m), y = g.interior_bundle(m);
    std::vector<double> mid(m), bigger(x);
    for (std::size_t j = 0; j < m; ++j) {
      mid[j] = 0.5 * (x[j] + y[j]);
      bigger[j] += g.uniform(0.0, 0.5);
    }
    CHECK(p(mid) <= 0.5 * p(x) + 0.5 * p(y) + 1e-12);
    CHECK(p(bigger) >= p(x));
    // Marginal prices match central differences.
    const auto mp = p.marginal_prices(x);
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> up(x), dn(x);
      up[j] += 1e-6;
      dn[j] -= 1e-6;
      CHECK(std::abs(mp[j] - (p(up) - p(dn)) / 2e-6) <= 1e-5 * std::max(1.0, mp[j]));
    }
  }
}

TEST_CASE("demand_residual examples") {
  const PricingRule p = make_pricing_rule({kRootQ}, 0.5, 1.0);
  const Instance inst = water_market(0.5);
  const std::vector<double> eq{1.0 / 12, 0.5, 5.0 / 12};
  for (std::size_t i = 0; i < 3; ++i) CHECK(demand_residual(p, inst.valuation(i), Bundle(&eq[i], 1)) <= 1e-8);

  const double shifted = 0.6 / 1.1;
  CHECK(demand_residual(p, inst.valuation(1), Bundle(&shifted, 1)) > 0.01);

  // Independent 1-D search of v(x) - p(x).
  for (std::size_t i = 0; i < 3; ++i) {
    double best = -1.0, arg = 0.0;
    for (int k = 0; k <= 10000; ++k) {
      const double x = k * 1e-4;
      const double u = inst.valuation(i).value(Bundle(&x, 1)) - p(Bundle(&x, 1));
      if (u > best) {
        best = u;
        arg = x;
      }
    }
    CHECK(std::abs(arg - eq[i]) <= 1e-4);
  }
}

TEST_CASE("we_certificate examples") {
  SUBCASE("solved rho = 0.5 case") {
    const Instance inst = water_market(0.5);
    const Allocation x = column({1.0 / 12, 0.5, 5.0 / 12});
    const Certificate c = we_certificate(inst, x, make_pricing_rule({kRootQ}, 0.5, 1.0));
    CHECK(c.pass);
    CHECK(c.payments[0] == doctest::Approx(1.0 / 24).epsilon(1e-12));
    CHECK(c.payments[1] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(c.payments[2] == doctest::Approx(25.0 / 24).epsilon(1e-12));
  }
  SUBCASE("water market linear equilibrium") {
    const Certificate c = we_certificate(water_market(1.0), column({0, 1, 0}), make_pricing_rule({6.0}, 1.0, 1.0));
    CHECK(c.pass);
    CHECK(c.payments[1] == 6.0);
  }
  SUBCASE("uniform split fails on stationarity") {
    const Certificate c =
        we_certificate(water_market(1.0), column({1.0 / 3, 1.0 / 3, 1.0 / 3}), make_pricing_rule({6.0}, 1.0, 1.0));
    CHECK_FALSE(c.pass);
    CHECK(c.stationarity > 0.1);
  }
  SUBCASE("unsold priced good fails clearing") {
    const Certificate c = we_certificate(water_market(1.0), column({0, 0.5, 0}), make_pricing_rule({6.0}, 1.0, 1.0));
    CHECK_FALSE(c.pass);
    CHECK(c.clearing == doctest::Approx(0.5));
  }
}

TEST_CASE("property: solve, extract, certify round trip") {
  oracle::Gen g(52);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 5));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75, 1.0});
    const Instance inst = oracle::random_instance(g, n, m, rho);
    const SolveResult r = solve_ces(inst);
    const auto q = extract_multipliers(inst, r.allocation);
    const PricingRule p = make_pricing_rule(q, rho, inst.degree());
    const Certificate c = we_certificate(inst, r.allocation, p);
    CHECK(c.pass);
    CHECK(c.stationarity <= 1e-6);
    CHECK(c.clearing <= 1e-6);
    CHECK(c.payment_ratio <= 1e-6);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = inst.valuation(i).value(r.allocation.bundle(i));
      CHECK(std::abs(p(r.allocation.bundle(i)) - rho * inst.degree() * v) <= 1e-8 * std::max(1.0, v));
      CHECK(demand_residual(p, inst.valuation(i), r.allocation.bundle(i)) <= 1e-6 * std::max(1.0, q[0]) + 1e-6);
    }
  }
}

TEST_CASE("property: moving 1% of a priced good breaks the certificate") {
  oracle::Gen g(53);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 4));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 2));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75});
    const Instance inst = oracle::random_instance(g, n, m, rho);
    const SolveResult r = solve_ces(inst);
    const PricingRule p = make_pricing_rule(r.multipliers, rho, inst.degree());
    // Largest holder of good 0 gives 0.01 to the next agent.
    std::size_t from = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (r.allocation(i, 0) > r.allocation(from, 0)) from = i;
    }
    const std::size_t to = (from + 1) % n;
    Allocation x = r.allocation;
    x(from, 0) -= 0.01;
    x(to, 0) += 0.01;
    const Certificate c = we_certificate(inst, x, p);
    CHECK_FALSE(c.pass);
    CHECK(std::max({c.stationarity, c.clearing, c.payment_ratio}) > 1e-5);
  }
}

TEST_CASE("property: utilitarian pricing is linear and maximizes total value") {
  oracle::Gen g(54);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 3));
    const std::size_t m = n == 2 ? static_cast<std::size_t>(g.integer(1, 2)) : 1;
    const Instance inst = oracle::random_instance(g, n, m, 1.0);
    const SolveResult r = solve_ces(inst);
    const Certificate c = certify_allocation(inst, r.allocation);
    CHECK(c.pass);
    if (inst.degree() == 1.0) {
      const PricingRule p = make_pricing_rule(r.multipliers, 1.0, 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        double lin = 0.0;
        for (std::size_t j = 0; j < m; ++j) lin += r.multipliers[j] * r.allocation(i, j);
        CHECK(p(r.allocation.bundle(i)) == doctest::Approx(lin).epsilon(1e-12));
      }
    }
    if (n == 2) {
      const double grid = oracle::brute_force_best(inst, m == 1 ? 2000 : 200, [](const std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s += e;
        return s;
      });
      CHECK(r.objective >= grid - 1e-9);
      CHECK(r.objective - grid <= 1e-3);
    } else {
      // One good: v_i = c_i x^r, so the closed form is exact.
      std::vector<double> w(n);
      const double one = 1.0;
      for (std::size_t i = 0; i < n; ++i) w[i] = inst.valuation(i).value(Bundle(&one, 1));
      const auto x = oracle::single_good_optimum(w, inst.degree(), 1.0);
      double best = 0.0;
      for (std::size_t i = 0; i < n; ++i) best += w[i] * std::pow(x[i], inst.degree());
      CHECK(r.objective == doctest::Approx(best).epsilon(1e-9));
    }
  }
}

TEST_CASE("property: everyone receives something when rho < 1 on one good") {
  oracle::Gen g(55);
  for (int t = 0; t < 20; ++t) {
    const Instance inst = oracle::random_instance(g, static_cast<std::size_t>(g.integer(2, 5)), 1,
                                                  g.pick(std::vector<double>{0.25, 0.5, 0.75}));
    const SolveResult r = solve_ces(inst);
    REQUIRE(certify_allocation(inst, r.allocation).pass);
    for (std::size_t i = 0; i < inst.agents(); ++i) CHECK(r.allocation(i, 0) > 0.0);
  }
}

TEST_CASE("to_fisher examples") {
  const Instance half = water_market(0.5);
  const FisherReport f = to_fisher(half, column({1.0 / 12, 0.5, 5.0 / 12}), make_pricing_rule({kRootQ}, 0.5, 1.0));
  CHECK(f.fisher_pass);
  CHECK(std::abs(f.budgets[0] - 1.0 / 24) <= 1e-10);
  CHECK(std::abs(f.budgets[1] - 1.5) <= 1e-10);
  CHECK(std::abs(f.budgets[2] - 25.0 / 24) <= 1e-10);

  const FisherReport u = to_fisher(water_market(1.0), column({0, 1, 0}), make_pricing_rule({6.0}, 1.0, 1.0));
  CHECK(u.fisher_pass);
  CHECK(u.budgets == std::vector<double>{0.0, 6.0, 0.0});

  CHECK(kind_of([&] {
          to_fisher(water_market(1.0), column({1.0 / 3, 1.0 / 3, 1.0 / 3}), make_pricing_rule({6.0}, 1.0, 1.0));
        }) == ErrorKind::NotEquilibrium);
}

TEST_CASE("weighted_shift_certificate examples") {
  const auto half = weighted_shift_certificate(water_market(0.5), column({1.0 / 12, 0.5, 5.0 / 12}), 0.5);
  CHECK(half.pass);
  CHECK(half.residual <= 1e-6);
  const auto eg = weighted_shift_certificate(water_market(1.0), column({0, 1, 0}), 1.0);
  CHECK(eg.pass);
  CHECK(kind_of([] { weighted_shift_certificate(water_market(0.5), column({0.1, 0.5, 0.4}), 0.5); }) ==
        ErrorKind::NotEquilibrium);
}

TEST_CASE("property: certified equilibria convert to Fisher markets and shift") {
  oracle::Gen g(56);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 4));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75, 1.0});
    const Instance inst = oracle::random_instance(g, n, m, rho);
    const SolveResult r = solve_ces(inst);
    const PricingRule p = make_pricing_rule(r.multipliers, rho, inst.degree());
    const FisherReport f = to_fisher(inst, r.allocation, p);
    CHECK(f.fisher_pass);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(f.budgets[i] - p(r.allocation.bundle(i))) <= 1e-10);
    CHECK(weighted_shift_certificate(inst, r.allocation, rho).pass);
  }
}
