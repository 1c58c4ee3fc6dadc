#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cesmarket/errors.hpp"
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

Instance leontief_pair(std::vector<double> w1, std::vector<double> w2, double rho) {
  return Instance({Valuation::leontief(std::move(w1)), Valuation::leontief(std::move(w2))}, rho);
}

std::vector<double> random_weights(oracle::Gen& g, std::size_t m) {
  std::vector<double> w(m);
  for (double& e : w) e = g.uniform(0.2, 3.0);
  return w;
}

}  // namespace

TEST_CASE("leontief examples") {
  SUBCASE("symmetric pair splits evenly") {
    const auto r = solve_leontief(leontief_pair({1, 1}, {1, 1}, 0.5));
    CHECK(r.alphas[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(r.alphas[1] == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("a lone agent is limited by its scarcest good") {
    const Instance inst({Valuation::leontief({1.0, 2.0})}, 0.5);
    const auto r = solve_leontief(inst);
    CHECK(r.alphas[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(r.allocation(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(r.allocation(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("one agent ignores the second good") {
    std::vector<double> ref;
    const double opt = oracle::leontief_two_agent_opt({1, 0}, {1, 1}, 0.5, {1, 1}, &ref);
    const auto r = solve_leontief(leontief_pair({1, 0}, {1, 1}, 0.5));
    CHECK(r.objective == doctest::Approx(opt).epsilon(1e-8));
    CHECK(r.alphas[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.alphas[1] == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("rho = 1 takes the vertex") {
    const auto r = solve_leontief(leontief_pair({1, 2}, {3, 1}, 1.0));
    CHECK(r.alphas[0] == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(r.alphas[1] == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(r.multipliers[0] == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(r.multipliers[1] == doctest::Approx(0.4).epsilon(1e-10));
  }
}

TEST_CASE("leontief errors") {
  const Instance mixed({Valuation::leontief({1.0, 1.0}), Valuation::linear({1.0, 1.0})}, 1.0);
  CHECK(kind_of([&] { solve_leontief(mixed); }) == ErrorKind::NotLeontief);
  const Instance ok = leontief_pair({1, 1}, {1, 2}, 0.5);
  const std::vector<double> short_s{1.0};
  CHECK(kind_of([&] { solve_leontief(ok, {}, short_s); }) == ErrorKind::DimensionMismatch);
  const std::vector<double> zero_s{1.0, 0.0};
  CHECK(kind_of([&] { solve_leontief(ok, {}, zero_s); }) == ErrorKind::BadParameter);
}

TEST_CASE("property: two agents match a one-dimensional search") {
  oracle::Gen g(41);
  for (int t = 0; t < 40; ++t) {
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75, 1.0});
    const auto w1 = random_weights(g, m), w2 = random_weights(g, m);
    const double opt = oracle::leontief_two_agent_opt(w1, w2, rho, std::vector<double>(m, 1.0));
    const auto r = solve_leontief(leontief_pair(w1, w2, rho));
    CHECK(r.objective == doctest::Approx(opt).epsilon(1e-6));
  }
}

TEST_CASE("property: allocations are tight, feasible and satisfy the KKT system") {
  oracle::Gen g(42);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 5));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 4));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75});
    std::vector<Valuation> vals;
    std::vector<std::vector<double>> W;
    for (std::size_t i = 0; i < n; ++i) {
      W.push_back(random_weights(g, m));
      vals.push_back(Valuation::leontief(W.back()));
    }
    const auto r = solve_leontief(Instance(std::move(vals), rho));
    for (std::size_t j = 0; j < m; ++j) {
      double used = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(r.allocation(i, j) - W[i][j] * r.alphas[i]) <= 1e-8);
        used += r.allocation(i, j);
      }
      CHECK(used <= 1.0 + 1e-8);
      CHECK(r.multipliers[j] >= 0.0);
      // Complementary slackness: slack goods carry no price.
      CHECK(r.multipliers[j] * (1.0 - used) <= 1e-8);
    }
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(r.alphas[i] > 0.0);
      double price = 0.0;
      for (std::size_t j = 0; j < m; ++j) price += W[i][j] * r.multipliers[j];
      const double marginal = std::pow(r.alphas[i], rho - 1.0);
      CHECK(std::abs(marginal - price) <= 1e-6 * std::max(1.0, price));
    }
  }
}

TEST_CASE("property: multipliers are the sensitivity of the optimum to supply") {
  oracle::Gen g(43);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 4));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.75});
    std::vector<Valuation> vals;
    for (std::size_t i = 0; i < n; ++i) vals.push_back(Valuation::leontief(random_weights(g, m)));
    const Instance inst(std::move(vals), rho);
    const auto base = solve_leontief(inst);
    const double h = 1e-4;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> up(m, 1.0), dn(m, 1.0);
      up[j] += h;
      dn[j] -= h;
      const double fd = (solve_leontief(inst, {}, up).objective - solve_leontief(inst, {}, dn).objective) / (2 * h);
      CHECK(std::abs(fd - base.multipliers[j]) <= 1e-3 * std::max(1.0, base.multipliers[j]));
    }
  }
}

TEST_CASE("property: scaling the supply scales alphas") {
  oracle::Gen g(44);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 3));
    const auto inst = leontief_pair(random_weights(g, m), random_weights(g, m), 0.5);
    const double c = g.uniform(0.5, 3.0);
    const auto a = solve_leontief(inst);
    const auto b = solve_leontief(inst, {}, std::vector<double>(m, c));
    for (std::size_t i = 0; i < 2; ++i) CHECK(b.alphas[i] == doctest::Approx(c * a.alphas[i]).epsilon(1e-6));
  }
}
