#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cesmarket/errors.hpp"
#include "cesmarket/pricing.hpp"
#include "cesmarket/solver.hpp"
#include "cesmarket/sybil.hpp"
#include "cesmarket/welfare.hpp"
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

struct Solved {
  Instance inst;
  SolveResult r;
  PricingRule p;
};

Solved solve_and_price(Instance inst) {
  SolveResult r = solve_ces(inst);
  PricingRule p = make_pricing_rule(r.multipliers, inst.rho(), inst.degree());
  return {std::move(inst), std::move(r), std::move(p)};
}

// Degree-one random instance.
Instance random_linear_degree(oracle::Gen& g, std::size_t n, std::size_t m, double rho) {
  for (;;) {
    Instance inst = oracle::random_instance(g, n, m, rho);
    if (inst.degree() == 1.0) return inst;
  }
}

}  // namespace

TEST_CASE("sybil_utility examples") {
  const Valuation v = Valuation::linear({1.0});
  // p(x) = 0.5 x at rho = 1: p(0.3) = 0.15.
  const PricingRule p = make_pricing_rule({0.5}, 1.0, 1.0);
  const double x = 0.3;
  CHECK(sybil_utility(v, Bundle(&x, 1), 3, p, 0.1) == doctest::Approx(0.15));
  CHECK(sybil_utility(v, Bundle(&x, 1), 1, p, 0.1) == doctest::Approx(0.3 - 0.15 - 0.1));
  CHECK(sybil_utility(v, Bundle(&x, 1), 2, p, 0.1) ==
        doctest::Approx(2 * sybil_utility(v, Bundle(&x, 1), 1, p, 0.1)));
  CHECK(kind_of([&] { sybil_utility(v, Bundle(&x, 1), 0, p, 0.1); }) == ErrorKind::BadMultiplicity);
}

TEST_CASE("sybil_status examples") {
  CHECK(sybil_status(0.3, 0.5, 0.2) == SybilStatus::Stable);
  CHECK(sybil_status(3.0, 0.5, 0.2) == SybilStatus::Unbounded);
  CHECK(sybil_status(1e9, 1.0, 0.0) == SybilStatus::Stable);
  CHECK(to_string(SybilStatus::Unbounded) == "unbounded");
}

TEST_CASE("swe_check examples") {
  SUBCASE("four identical agents under the cap") {
    std::vector<Valuation> vals(4, Valuation::linear({0.4}));
    const Solved s = solve_and_price(Instance(vals, 0.5));
    const SweReport rep = swe_check(s.inst, s.r.allocation, s.p, 0.2);
    CHECK(rep.is_swe);
    CHECK(rep.cap == doctest::Approx(0.4));
    CHECK(rep.welfare_cap == doctest::Approx(6.4));
  }
  SUBCASE("utilitarian pricing is always stable") {
    const Solved s = solve_and_price(water_market(1.0));
    const SweReport rep = swe_check(s.inst, s.r.allocation, s.p, 0.0);
    CHECK(rep.is_swe);
    CHECK(std::isinf(rep.cap));
  }
  SUBCASE("the water market at rho = 0.5 is not a SWE for kappa = 0.1") {
    const Solved s = solve_and_price(water_market(0.5));
    const SweReport rep = swe_check(s.inst, s.r.allocation, s.p, 0.1);
    CHECK_FALSE(rep.is_swe);
    CHECK(rep.values[1] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(rep.statuses[1] == SybilStatus::Unbounded);
  }
}

TEST_CASE("swe_check errors") {
  const Instance half_degree({Valuation::power(1.0, 0.5), Valuation::power(2.0, 0.5)}, 0.5);
  const Solved s = solve_and_price(half_degree);
  CHECK(kind_of([&] { swe_check(s.inst, s.r.allocation, s.p, 0.1); }) == ErrorKind::UnsupportedDegree);

  const Solved f = solve_and_price(water_market(0.5));
  Allocation bad(3, 1);
  bad(0, 0) = 0.1;
  bad(1, 0) = 0.5;
  bad(2, 0) = 0.4;
  CHECK(kind_of([&] { swe_check(f.inst, bad, f.p, 0.1); }) == ErrorKind::NotEquilibrium);
}

TEST_CASE("single_good_sybil_cap examples") {
  CHECK(single_good_sybil_cap(2.0, 0.5) == doctest::Approx(0.5));
  CHECK(single_good_sybil_cap(2.0, 0.0) == 0.0);
  CHECK(single_good_sybil_cap(3.0, 1.0) == doctest::Approx(0.5));
  CHECK(kind_of([] { single_good_sybil_cap(1.0, 0.5); }) == ErrorKind::BadParameter);
}

TEST_CASE("property: swe_check agrees with per-agent status") {
  oracle::Gen g(71);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 5));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75, 1.0});
    const Solved s = solve_and_price(random_linear_degree(g, n, m, rho));
    const double kappa = g.uniform(0.0, 2.0);
    const SweReport rep = swe_check(s.inst, s.r.allocation, s.p, kappa);
    bool all = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = s.inst.valuation(i).value(s.r.allocation.bundle(i));
      const SybilStatus st = sybil_status(v, rho, kappa);
      CHECK(rep.statuses[i] == st);
      all = all && st == SybilStatus::Stable;
    }
    CHECK(rep.is_swe == all);
  }
}

TEST_CASE("property: extra identities pay exactly when v (1 - rho) > kappa") {
  oracle::Gen g(72);
  int stable = 0, unbounded = 0;
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 4));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 2));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75});
    const Solved s = solve_and_price(random_linear_degree(g, n, m, rho));
    for (std::size_t i = 0; i < n; ++i) {
      const Bundle x = s.r.allocation.bundle(i);
      const double v = s.inst.valuation(i).value(x);
      // Alternate kappa on either side of the threshold.
      const double kappa = (t + i) % 2 == 0 ? v * (1 - rho) * g.uniform(1.0, 2.0) : v * (1 - rho) * g.uniform(0.0, 0.9);
      const MultiplicityScan scan = scan_multiplicity(s.inst.valuation(i), x, s.p, kappa);
      REQUIRE(scan.best_utility.size() == 10);
      if (v * (1 - rho) <= kappa) {
        ++stable;
        for (int e = 2; e <= 10; ++e) CHECK(scan.best_utility[e - 1] <= scan.best_utility[0] + 1e-12);
        CHECK(scan.best_eta == 1);
      } else if (v * (1 - rho) > kappa + 1e-6) {
        ++unbounded;
        CHECK(scan.best_eta > 1);
      }
    }
  }
  CHECK(stable > 10);
  CHECK(unbounded > 10);
}

TEST_CASE("property: SWE allocations stay under the welfare cap") {
  oracle::Gen g(73);
  int swe = 0;
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 4));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75});
    const Solved s = solve_and_price(random_linear_degree(g, n, 1, rho));
    const double kappa = g.uniform(0.0, 3.0);
    const SweReport rep = swe_check(s.inst, s.r.allocation, s.p, kappa);
    if (!rep.is_swe) continue;
    ++swe;
    CHECK(ces_welfare({rho, {}}, rep.values) <= rep.welfare_cap + 1e-9);
  }
  CHECK(swe > 5);
}

TEST_CASE("scan_multiplicity rejects a bad range") {
  const Valuation v = Valuation::linear({1.0});
  const PricingRule p = make_pricing_rule({1.0}, 0.5, 1.0);
  const double x = 0.5;
  CHECK(kind_of([&] { scan_multiplicity(v, Bundle(&x, 1), p, 0.1, 0); }) == ErrorKind::BadMultiplicity);
}
