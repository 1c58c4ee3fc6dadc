#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cesmarket/instance.hpp"
#include "cesmarket/solver.hpp"

namespace cesmarket {

/// p(x) = rho * r^{(rho-1)/rho} * (sum_j q_j x_j)^{1/rho}: convex,
/// nondecreasing, p(0) = 0, and linear with coefficients q when rho = r = 1.
class PricingRule {
 public:
  PricingRule(std::vector<double> q, double rho, double r);

  const std::vector<double>& q() const noexcept { return q_; }
  double rho() const noexcept { return rho_; }
  double degree() const noexcept { return r_; }
  /// rho * r^{(rho-1)/rho}
  double scale() const noexcept { return scale_; }

  double price(Bundle x) const;
  double operator()(Bundle x) const { return price(x); }

  /// dp/dx_j = r^{(rho-1)/rho} q_j (sum_l q_l x_l)^{(1-rho)/rho}.
  std::vector<double> marginal_prices(Bundle x) const;

 private:
  double linear_part(Bundle x) const;

  std::vector<double> q_;
  double rho_;
  double r_;
  double scale_;
};

/// Throws BadParameter unless q >= 0 and rho, r lie in (0, 1].
PricingRule make_pricing_rule(std::vector<double> q, double rho, double r);

/// Max over goods of the violation of dv/dx_j <= dp/dx_j (with equality
/// where x_j > 0). Zero means x lies in the agent's demand set. Coordinates
/// where dv/dx_j diverges and x_j = 0 are not counted.
double demand_residual(const PricingRule& p, const Valuation& v, Bundle x);

struct Certificate {
  double stationarity = 0.0;
  double clearing = 0.0;
  double payment_ratio = 0.0;
  bool pass = false;
  double tolerance = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> waived;
  /// p(x_i) per agent.
  std::vector<double> payments;
};

/// Residuals of the equilibrium conditions for (x, p) under the instance's
/// rho: stationarity of the welfare program at multipliers p.q(), clearing
/// of positively priced goods, and |p(x_i) - rho r v_i(x_i)|.
Certificate we_certificate(const Instance& instance, const Allocation& x,
                           const PricingRule& p, double tolerance = default_tolerance());

/// Multipliers from x, the induced rule, and its certificate in one step.
Certificate certify_allocation(const Instance& instance, const Allocation& x,
                               double tolerance = default_tolerance());

struct FisherReport {
  std::vector<double> budgets;
  bool fisher_pass = false;
  /// Largest v_i(y) - v_i(x_i) seen over affordable probe bundles y.
  double worst_gain = 0.0;
};

/// Budgets B_i = p(x_i) and a scan of affordable bundles confirming x_i is
/// budget-optimal. Full grid for m <= 2, pairwise exchanges otherwise.
/// Throws NotEquilibrium when (x, p) does not certify.
FisherReport to_fisher(const Instance& instance, const Allocation& x, const PricingRule& p,
                       double tolerance = default_tolerance());

struct WeightedShiftReport {
  bool pass = false;
  double residual = 0.0;
  std::vector<double> weights;
  std::vector<double> multipliers;
};

/// With a_i = v_i(x_i), checks that x is also stationary for the weighted
/// program at rho - 1 (the weighted log objective when rho = 1). Throws
/// NotEquilibrium when x does not certify at rho.
WeightedShiftReport weighted_shift_certificate(const Instance& instance, const Allocation& x,
                                               double rho,
                                               double tolerance = default_tolerance());

}  // namespace cesmarket
