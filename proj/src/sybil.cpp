#include "cesmarket/sybil.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "cesmarket/errors.hpp"

namespace cesmarket {

namespace {

void require_kappa(double kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    fail(ErrorKind::BadParameter, "identity cost kappa must be finite and >= 0");
  }
}

}  // namespace

double sybil_utility(const Valuation& v, Bundle x, int eta, const PricingRule& p, double kappa) {
  if (eta < 1) {
    std::ostringstream os;
    os << "multiplicity must be >= 1, got " << eta;
    fail(ErrorKind::BadMultiplicity, os.str());
  }
  require_kappa(kappa);
  std::vector<double> scaled(x.begin(), x.end());
  for (double& s : scaled) s *= eta;
  return v.value(scaled) - eta * p.price(x) - eta * kappa;
}

std::string_view to_string(SybilStatus status) {
  return status == SybilStatus::Stable ? "stable" : "unbounded";
}

SybilStatus sybil_status(double value_at_opt, double rho, double kappa) {
  return value_at_opt * (1.0 - rho) <= kappa ? SybilStatus::Stable : SybilStatus::Unbounded;
}

SweReport swe_check(const Instance& instance, const Allocation& x, const PricingRule& p,
                    double kappa, double tolerance) {
  require_kappa(kappa);
  if (instance.degree() != 1.0) {
    std::ostringstream os;
    os << "sybil analysis covers degree-one valuations only, got r = " << instance.degree();
    fail(ErrorKind::UnsupportedDegree, os.str());
  }
  if (!we_certificate(instance, x, p, tolerance).pass) {
    fail(ErrorKind::NotEquilibrium, "allocation and pricing rule do not form an equilibrium");
  }
  const double rho = instance.rho();
  SweReport out;
  out.cap = rho == 1.0 ? std::numeric_limits<double>::infinity() : kappa / (1.0 - rho);
  out.welfare_cap = std::pow(static_cast<double>(instance.agents()), 1.0 / rho) * out.cap;
  out.values = instance.values(x);
  out.is_swe = true;
  for (double v : out.values) {
    out.statuses.push_back(sybil_status(v, rho, kappa));
    out.is_swe = out.is_swe && out.statuses.back() == SybilStatus::Stable;
  }
  return out;
}

double single_good_sybil_cap(double w, double kappa) {
  if (!(w > 1.0) || !std::isfinite(w)) fail(ErrorKind::BadParameter, "w must be > 1");
  require_kappa(kappa);
  return kappa / (w - 1.0);
}

MultiplicityScan scan_multiplicity(const Valuation& v, Bundle x, const PricingRule& p,
                                   double kappa, int max_eta, std::size_t t_grid) {
  if (max_eta < 1) fail(ErrorKind::BadMultiplicity, "max_eta must be >= 1");
  if (t_grid < 1) fail(ErrorKind::BadParameter, "t_grid must be >= 1");
  MultiplicityScan out;
  std::vector<double> y(x.size());
  for (int eta = 1; eta <= max_eta; ++eta) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= t_grid; ++k) {
      // t runs over (0, 2] and hits 1 exactly.
      const double t = 2.0 * static_cast<double>(k) / static_cast<double>(t_grid);
      for (std::size_t j = 0; j < x.size(); ++j) y[j] = t * x[j];
      best = std::max(best, sybil_utility(v, y, eta, p, kappa));
    }
    out.best_utility.push_back(best);
    if (best > out.best_utility[static_cast<std::size_t>(out.best_eta - 1)]) out.best_eta = eta;
  }
  return out;
}

}  // namespace cesmarket
