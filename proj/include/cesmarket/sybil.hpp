#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "cesmarket/instance.hpp"
#include "cesmarket/pricing.hpp"

namespace cesmarket {

/// v(eta x) - eta p(x) - eta kappa: an agent splitting its purchase across
/// eta identities that each buy x at cost kappa per identity.
double sybil_utility(const Valuation& v, Bundle x, int eta, const PricingRule& p, double kappa);

enum class SybilStatus { Stable, Unbounded };

std::string_view to_string(SybilStatus status);

/// Stable iff v (1 - rho) <= kappa; otherwise every extra identity pays and
/// the demanded multiplicity is unbounded.
SybilStatus sybil_status(double value_at_opt, double rho, double kappa);

struct SweReport {
  bool is_swe = false;
  /// kappa / (1 - rho); +inf at rho = 1.
  double cap = 0.0;
  /// n^{1/rho} kappa / (1 - rho).
  double welfare_cap = 0.0;
  std::vector<double> values;
  std::vector<SybilStatus> statuses;
};

/// Degree-one instances only (UnsupportedDegree otherwise). Throws
/// NotEquilibrium when (x, p) does not certify.
SweReport swe_check(const Instance& instance, const Allocation& x, const PricingRule& p,
                    double kappa, double tolerance = default_tolerance());

/// kappa / (w - 1); BadParameter unless w > 1.
double single_good_sybil_cap(double w, double kappa);

struct MultiplicityScan {
  /// best_utility[e - 1]: max over per-identity bundles t x (t on a grid in
  /// (0, 2]) of the utility with e identities.
  std::vector<double> best_utility;
  int best_eta = 1;
};

/// Brute force over eta = 1..max_eta and scaled copies of x.
MultiplicityScan scan_multiplicity(const Valuation& v, Bundle x, const PricingRule& p,
                                   double kappa, int max_eta = 10, std::size_t t_grid = 400);

}  // namespace cesmarket
