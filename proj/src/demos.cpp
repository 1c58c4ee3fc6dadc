#include "cesmarket/demos.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "cesmarket/errors.hpp"
#include "cesmarket/pricing.hpp"
#include "cesmarket/welfare.hpp"

namespace cesmarket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// argmax over k = lo..hi of f(k / grid)
template <class F>
double grid_argmax(F f, std::size_t grid, std::size_t lo, std::size_t hi) {
  double best = -kInf, arg = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(grid);
    const double v = f(x);
    if (v > best) {
      best = v;
      arg = x;
    }
  }
  return arg;
}

double single(const Valuation& v, double x) { return v.value(std::span<const double>(&x, 1)); }

double slope(const Valuation& v, double x) { return v.gradient(std::span<const double>(&x, 1))[0]; }

}  // namespace

GapReport linear_gap_demo(std::size_t n, double eps, double rho) {
  if (n < 2) fail(ErrorKind::BadParameter, "the gap demo needs n >= 2");
  if (!(eps > 0.0) || !std::isfinite(eps)) fail(ErrorKind::BadParameter, "eps must be > 0");
  require_rho_in_unit(rho);
  std::vector<double> w(n, 1.0);
  w[0] = 1.0 + eps;

  GapReport out;
  out.n = n;
  out.eps = eps;
  out.rho = rho;
  // Linear prices: everyone but the top bidder is priced out.
  std::vector<double> we_values(n, 0.0);
  we_values[0] = w[0];
  const WelfareParams params{rho, {}};
  out.we_welfare = ces_welfare(params, we_values);

  const Allocation opt = closed_form_single_good(w, 1.0, rho);
  std::vector<double> opt_values(n);
  for (std::size_t i = 0; i < n; ++i) opt_values[i] = w[i] * opt(i, 0);
  out.opt_welfare = ces_welfare(params, opt_values);
  out.ratio = out.we_welfare / out.opt_welfare;
  out.bound = (1.0 + eps) / std::pow(static_cast<double>(n), 1.0 / rho - 1.0);
  return out;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::MixedDegree: return "mixed-degree";
    case ViolationKind::NegativeRho: return "neg-rho";
    case ViolationKind::NashDifferentiable: return "nash";
  }
  return "unknown";
}

ViolationReport exchange_violation_demo(ViolationKind kind, double rho, std::size_t grid) {
  if (grid < 4) fail(ErrorKind::BadParameter, "grid must have at least 4 cells");
  ViolationReport out;
  out.kind = kind;
  out.rho = rho;
  switch (kind) {
    case ViolationKind::MixedDegree: {
      if (!(rho > 0.0 && rho < 1.0)) {
        std::ostringstream os;
        os << "mixed-degree demo needs rho in (0,1), got " << rho;
        fail(ErrorKind::BadRho, os.str());
      }
      const Valuation v1 = Valuation::linear({1.0});
      const Valuation v2 = Valuation::power(std::sqrt(2.0), 0.5);
      const WelfareParams params{rho, {}};
      const double x1 = grid_argmax(
          [&](double t) {
            const double vals[2] = {single(v1, t), single(v2, 1.0 - t)};
            return ces_objective(params, vals);
          },
          grid, 0, grid);
      const double x2 = 1.0 - x1;
      out.instance = "v1(x) = x, v2(x) = sqrt(2x), one good";
      out.inequality = "v1(x1) - v1(x2) >= v2(x1) - v2(x2)";
      out.optimum = {x1, x2};
      out.lhs = single(v1, x1) - single(v1, x2);
      out.rhs = single(v2, x1) - single(v2, x2);
      out.margin = out.rhs - out.lhs;

      // Exact optimum: x1^{rho-1} = (2 x2)^{rho/2 - 1}.
      double lo = 1e-12, hi = 1.0 - 1e-12;
      auto h = [&](double t) {
        return std::pow(t, rho - 1.0) - std::pow(2.0 * (1.0 - t), rho / 2.0 - 1.0);
      };
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) > 0.0 ? lo : hi) = mid;
      }
      const double e = 0.5 * (lo + hi) - 0.5;
      out.analytic_margin =
          4.0 * e / (std::sqrt(1.0 + 2.0 * e) + std::sqrt(1.0 - 2.0 * e)) - 2.0 * e;
      break;
    }
    case ViolationKind::NegativeRho: {
      if (!(rho < 0.0) || !std::isfinite(rho)) {
        std::ostringstream os;
        os << "negative-rho demo needs rho < 0, got " << rho;
        fail(ErrorKind::BadRho, os.str());
      }
      const double w1 = 1.0, w2 = 2.0;
      const double k = rho / (1.0 - rho);
      const double x1 = std::pow(w1, k) / (std::pow(w1, k) + std::pow(w2, k));
      const WelfareParams params{rho, {}};
      const double check = grid_argmax(
          [&](double t) {
            const double vals[2] = {w1 * t, w2 * (1.0 - t)};
            return ces_welfare(params, vals);
          },
          grid, 1, grid - 1);
      if (std::abs(check - x1) > 2.0 / static_cast<double>(grid)) {
        fail(ErrorKind::DidNotConverge, "grid optimum disagrees with the closed form");
      }
      const double x2 = 1.0 - x1;
      out.instance = "v1(x) = x, v2(x) = 2x, one good";
      // Agent 1 prefers x1: p(x1) <= p(x2) + x1 - x2. Then agent 2 gets at
      // least x1 + x2 - p(x2) from x1's bundle, above its own 2 x2 - p(x2).
      out.inequality = "v2(x1) - p(x1) + p(x2) >= x1 + x2 > 2 x2 = v2(x2)";
      out.optimum = {x1, x2};
      out.lhs = x1 + x2;
      out.rhs = w2 * x2;
      out.margin = out.lhs - out.rhs;
      break;
    }
    case ViolationKind::NashDifferentiable: {
      const Valuation v1 = Valuation::linear({1.0});
      const Valuation v2 = Valuation::linear({2.0});
      const double x1 = grid_argmax(
          [&](double t) {
            const double vals[2] = {single(v1, t), single(v2, 1.0 - t)};
            return nash_objective({}, vals);
          },
          grid, 1, grid - 1);
      const double x2 = 1.0 - x1;
      out.instance = "v1(x) = x, v2(x) = 2x, one good, Nash welfare";
      out.inequality = "v1'(x1) = p'(x1) = p'(x2) = v2'(x2) with x1 = x2";
      out.optimum = {x1, x2};
      out.lhs = slope(v1, x1);
      out.rhs = slope(v2, x2);
      out.margin = std::abs(out.rhs - out.lhs);
      break;
    }
  }
  return out;
}

NashPricingReport nash_threshold_pricing(const Instance& instance, const SolveOptions& opts) {
  const WelfareObjective nash = WelfareObjective::nash();
  const SolveResult res = solve_welfare(instance, nash, opts);
  NashPricingReport out;
  out.allocation = res.allocation;
  out.q = extract_multipliers(instance, res.allocation, nash, opts.tolerance);
  // Euler: sum_j x_ij dv_i/dx_ij / v_i = r, so dividing by r makes spends 1.
  for (double& qj : out.q) qj /= instance.degree();
  out.budget_pricing_check = true;
  for (std::size_t i = 0; i < instance.agents(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < instance.goods(); ++j) s += out.q[j] * res.allocation(i, j);
    out.spends.push_back(s);
    out.budget_pricing_check = out.budget_pricing_check && std::abs(s - 1.0) <= 1e-6;
  }
  return out;
}

std::size_t default_grid_resolution(const Instance& instance) {
  return (instance.agents() - 1) * instance.goods() == 1 ? 2000 : 200;
}

FirstWelfareReport first_welfare_check(const Instance& instance, const Allocation& x,
                                       std::span<const double> linear_q) {
  instance.check_allocation(x);
  const std::size_t n = instance.agents(), m = instance.goods();
  if (linear_q.size() != m) fail(ErrorKind::DimensionMismatch, "one price per good");
  const PricingRule p = make_pricing_rule({linear_q.begin(), linear_q.end()}, 1.0, 1.0);
  constexpr double tol = 1e-6;
  for (std::size_t i = 0; i < n; ++i) {
    const double res = demand_residual(p, instance.valuation(i), x.bundle(i));
    if (!(res <= tol)) {
      std::ostringstream os;
      os << "agent " << i << " is not demanding its bundle at these prices (residual " << res
         << ")";
      fail(ErrorKind::NotEquilibrium, os.str());
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double s = x.column_sum(j);
    if (s > 1.0 + kSupplySlack || (linear_q[j] > 0.0 && std::abs(1.0 - s) > tol)) {
      std::ostringstream os;
      os << "good " << j << " does not clear (allocated " << s << ")";
      fail(ErrorKind::NotEquilibrium, os.str());
    }
  }
  const Instance utilitarian = instance.with_rho(1.0);
  std::size_t res = default_grid_resolution(instance);
  Allocation y;
  for (;;) {
    try {
      y = grid_oracle(utilitarian, res);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TooLarge || res <= 2) throw;
      res /= 2;
    }
  }
  FirstWelfareReport out;
  for (double v : instance.values(x)) out.welfare += v;
  for (double v : instance.values(y)) out.grid_welfare += v;
  out.grid_allocation = y.data();
  out.holds = out.welfare >= out.grid_welfare - tol;
  return out;
}

}  // namespace cesmarket
