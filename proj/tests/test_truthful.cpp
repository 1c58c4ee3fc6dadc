#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cesmarket/errors.hpp"
#include "cesmarket/solver.hpp"
#include "cesmarket/truthful.hpp"
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

std::vector<double> random_bids(oracle::Gen& g, std::size_t n) {
  std::vector<double> b(n);
  for (double& e : b) e = g.uniform(0.2, 5.0);
  return b;
}

double utility(double w, const std::vector<double>& bids, std::size_t i, double r, double rho) {
  const BidProfile prof{bids, r, rho};
  return w * std::pow(truthful_allocation(prof)(i, 0), r) - truthful_payment(prof, i);
}

}  // namespace

TEST_CASE("truthful_allocation examples") {
  const Allocation even = truthful_allocation({{1.0, 1.0}, 0.75, 0.3});
  CHECK(even(0, 0) == doctest::Approx(0.5));
  CHECK(even(1, 0) == doctest::Approx(0.5));

  const Allocation fig = truthful_allocation({{1.0, 6.0, 5.0}, 1.0, 0.5});
  CHECK(fig(0, 0) == doctest::Approx(1.0 / 12));
  CHECK(fig(1, 0) == doctest::Approx(0.5));
  CHECK(fig(2, 0) == doctest::Approx(5.0 / 12));

  const Allocation sq = truthful_allocation({{2.0, 1.0}, 1.0, 2.0 / 3});
  CHECK(sq(0, 0) == doctest::Approx(0.8));
  CHECK(sq(1, 0) == doctest::Approx(0.2));
}

TEST_CASE("property: the allocation maximizes CES welfare of the bids") {
  oracle::Gen g(61);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 5));
    const auto b = random_bids(g, n);
    const double r = g.pick(std::vector<double>{0.5, 0.75, 1.0});
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.9});
    const Allocation x = truthful_allocation({b, r, rho});
    const auto ref = oracle::single_good_optimum(b, r, rho);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(x(i, 0) == doctest::Approx(ref[i]).epsilon(1e-12));
      s += x(i, 0);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("bid validation") {
  CHECK(kind_of([] { truthful_allocation({{1.0, 0.0}, 1.0, 0.5}); }) == ErrorKind::BadBid);
  CHECK(kind_of([] { truthful_allocation({{1.0, -2.0}, 1.0, 0.5}); }) == ErrorKind::BadBid);
  CHECK(kind_of([] { truthful_allocation({{1.0, 2.0}, 1.0, 1.0}); }) == ErrorKind::BadRho);
  CHECK(kind_of([] { truthful_allocation({{1.0, 2.0}, 1.5, 0.5}); }) == ErrorKind::BadParameter);
  CHECK(kind_of([] { truthful_allocation({{}, 1.0, 0.5}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("truthful_payment examples") {
  CHECK(std::abs(truthful_payment({{1.0, 1.0}, 1.0, 0.5}, 0) - (std::log(2.0) - 0.5)) <= 1e-9);
  CHECK(std::abs(truthful_payment({{2.0, 1.0}, 1.0, 0.5}, 0) - (std::log(3.0) + 1.0 / 3 - 1.0)) <= 1e-9);
  CHECK(truthful_payment({{1e-12, 1.0}, 1.0, 0.5}, 0) <= 1e-20);
  CHECK(truthful_payment({{5.0}, 1.0, 0.5}, 0) == 0.0);
}

TEST_CASE("property: payments match the closed form at r = 1, rho = 0.5") {
  oracle::Gen g(62);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 5));
    const auto b = random_bids(g, n);
    const std::size_t i = static_cast<std::size_t>(g.integer(0, static_cast<int>(n) - 1));
    double S = 0.0;
    for (std::size_t k = 0; k < n; ++k) S += k == i ? 0.0 : b[k];
    CHECK(std::abs(truthful_payment({b, 1.0, 0.5}, i) - oracle::payment_r1_alpha1(b[i], S)) <= 1e-9);
  }
}

TEST_CASE("property: payments match tanh-sinh quadrature for general r, rho") {
  oracle::Gen g(63);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 5));
    const auto b = random_bids(g, n);
    const double r = g.pick(std::vector<double>{0.5, 0.75, 1.0});
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.9});
    const std::size_t i = static_cast<std::size_t>(g.integer(0, static_cast<int>(n) - 1));
    const double ref = oracle::payment_reference(b, i, r, rho);
    CHECK(std::abs(truthful_payment({b, r, rho}, i) - ref) <= 1e-8 * std::max(1.0, ref));
  }
}

TEST_CASE("property: payment is nondecreasing in the own bid") {
  oracle::Gen g(64);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 4));
    auto b = random_bids(g, n);
    const double r = g.pick(std::vector<double>{0.5, 0.75, 1.0});
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.9});
    double prev = 0.0;
    for (int k = 1; k <= 40; ++k) {
      b[0] = 0.2 * k;
      const double p = truthful_payment({b, r, rho}, 0);
      CHECK(p >= prev - 1e-9);
      prev = p;
    }
  }
}

TEST_CASE("best response examples") {
  const std::vector<double> one{1.0};
  const auto s = scan_best_response(1.0, one, 1.0, 0.5);
  CHECK(s.bids.size() == 400);
  CHECK(std::abs(s.best_bid - 1.0) <= s.step);
  CHECK(s.step == doctest::Approx((4.0 - 0.25) / 399));

  const std::vector<double> two{1.0, 2.0};
  const auto t = scan_best_response(3.0, two, 0.5, 0.5);
  CHECK(std::abs(t.best_bid - 3.0) <= t.step);
  CHECK(best_response_scan(3.0, two, 0.5, 0.5) == t.best_bid);
}

TEST_CASE("utility rises below the true weight and falls above it") {
  const std::vector<double> others{1.0};
  const auto s = scan_best_response(1.0, others, 1.0, 0.5);
  for (std::size_t k = 0; k + 1 < s.bids.size(); ++k) {
    const double du = s.utilities[k + 1] - s.utilities[k];
    if (s.bids[k + 1] < 1.0 - s.step) CHECK(du > 0.0);
    if (s.bids[k] > 1.0 + s.step) CHECK(du < 0.0);
  }
}

TEST_CASE("property: truthful reporting is a best response") {
  oracle::Gen g(65);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 5));
    const auto others = random_bids(g, n - 1);
    const double w = g.uniform(0.2, 5.0);
    const double r = g.pick(std::vector<double>{0.5, 0.75});
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.9});
    const auto s = scan_best_response(w, others, r, rho);
    CHECK(std::abs(s.best_bid - w) <= s.step);
  }
}

TEST_CASE("individual rationality is measured on random profiles") {
  oracle::Gen g(66);
  int rational = 0, total = 0;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 5));
    const auto b = random_bids(g, n);
    const double r = g.pick(std::vector<double>{0.5, 0.75, 1.0});
    const double rho = g.pick(std::vector<double>{0.25, 0.5, 0.9});
    for (std::size_t i = 0; i < n; ++i) {
      const double u = utility(b[i], b, i, r, rho);
      ++total;
      if (u >= 0.0) ++rational;
      worst = std::min(worst, u);
    }
  }
  MESSAGE("utility at truthful bid >= 0 for " << rational << "/" << total << " agents, worst " << worst);
}

TEST_CASE("vcg examples") {
  const std::vector<double> fig{1.0, 6.0, 5.0};
  const VcgOutcome a = vcg_single_good(fig);
  CHECK(a.winner == 1);
  CHECK(a.allocation(1, 0) == 1.0);
  CHECK(a.payments == std::vector<double>{0.0, 5.0, 0.0});

  const std::vector<double> tie{4.0, 4.0};
  const VcgOutcome b = vcg_single_good(tie);
  CHECK(b.winner == 0);
  CHECK(b.payments[0] == 4.0);

  const std::vector<double> solo{7.0};
  CHECK(vcg_single_good(solo).payments[0] == 0.0);
  CHECK(kind_of([] { vcg_single_good({}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("vcg allocates like the utilitarian solver") {
  const Instance inst({Valuation::linear({1.0}), Valuation::linear({6.0}), Valuation::linear({5.0})}, 1.0);
  const std::vector<double> w{1.0, 6.0, 5.0};
  CHECK(vcg_single_good(w).allocation == solve_ces(inst).allocation);
}

TEST_CASE("adaptive_simpson") {
  CHECK(adaptive_simpson([](double x) { return x * x; }, 0.0, 3.0, 1e-12) == doctest::Approx(9.0));
  CHECK(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, M_PI, 1e-10) ==
        doctest::Approx(2.0).epsilon(1e-10));
  CHECK(kind_of([] {
          adaptive_simpson([](double x) { return x > 0.0 ? 1.0 / std::sqrt(x) : 1e300; }, 0.0, 1.0, 1e-14, 8);
        }) == ErrorKind::QuadratureFailure);
}
