#include "cesmarket/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <variant>

#include "cesmarket/errors.hpp"

namespace cesmarket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_unit(double v, const char* what) {
  if (!(v > 0.0 && v <= 1.0)) {
    std::ostringstream os;
    os << what << " must lie in (0,1], got " << v;
    fail(ErrorKind::BadParameter, os.str());
  }
}

}  // namespace

PricingRule::PricingRule(std::vector<double> q, double rho, double r)
    : q_(std::move(q)), rho_(rho), r_(r) {
  require_unit(rho_, "rho");
  require_unit(r_, "degree r");
  for (double qj : q_) {
    if (!(qj >= 0.0) || !std::isfinite(qj)) {
      fail(ErrorKind::BadParameter, "multipliers q must be finite and >= 0");
    }
  }
  scale_ = rho_ * std::pow(r_, (rho_ - 1.0) / rho_);
}

double PricingRule::linear_part(Bundle x) const {
  if (x.size() != q_.size()) {
    fail(ErrorKind::DimensionMismatch, "bundle and pricing rule disagree on goods");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < q_.size(); ++j) s += q_[j] * x[j];
  return s;
}

double PricingRule::price(Bundle x) const {
  const double s = linear_part(x);
  if (rho_ == 1.0) return scale_ * s;
  return scale_ * std::pow(s, 1.0 / rho_);
}

std::vector<double> PricingRule::marginal_prices(Bundle x) const {
  const double s = linear_part(x);
  const double c = std::pow(r_, (rho_ - 1.0) / rho_) *
                   (rho_ == 1.0 ? 1.0 : std::pow(s, (1.0 - rho_) / rho_));
  std::vector<double> out(q_.size());
  for (std::size_t j = 0; j < q_.size(); ++j) out[j] = c * q_[j];
  return out;
}

PricingRule make_pricing_rule(std::vector<double> q, double rho, double r) {
  return PricingRule(std::move(q), rho, r);
}

double demand_residual(const PricingRule& p, const Valuation& v, Bundle x) {
  const auto dp = p.marginal_prices(x);
  const auto dv = v.partials(x);
  double worst = 0.0;
  for (std::size_t j = 0; j < dp.size(); ++j) {
    if (!dv[j]) {
      if (x[j] > 0.0) return kInf;
      continue;
    }
    const double gap = *dv[j] - dp[j];
    worst = std::max(worst, x[j] > 0.0 ? std::abs(gap) : std::max(0.0, gap));
  }
  return worst;
}

Certificate we_certificate(const Instance& instance, const Allocation& x,
                           const PricingRule& p, double tolerance) {
  instance.check_allocation(x);
  const std::size_t n = instance.agents(), m = instance.goods();
  const double rho = instance.rho();
  const double r = instance.degree();
  const auto& q = p.q();
  if (q.size() != m) fail(ErrorKind::DimensionMismatch, "pricing rule has wrong goods count");

  Certificate c;
  c.tolerance = tolerance;
  c.payments.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& val = instance.valuation(i);
    const auto xi = x.bundle(i);
    const double v = val.value(xi);
    const double w = rho == 1.0 ? 1.0 : (v > 0.0 ? std::pow(v, rho - 1.0) : kInf);
    if (val.kind() == ValuationKind::Leontief) {
      // alpha^{rho-1} = sum_j w_j q_j, and no paid-for surplus beyond w alpha.
      const auto& lw = std::get<Valuation::LeontiefParams>(val.params()).weights;
      double wq = 0.0;
      for (std::size_t j = 0; j < m; ++j) wq += lw[j] * q[j];
      const double viol = v > 0.0 ? std::abs(w - wq) : std::max(0.0, w - wq);
      c.stationarity = std::max(c.stationarity, viol / std::max(1.0, wq));
      for (std::size_t j = 0; j < m; ++j) {
        const double extra = xi[j] - lw[j] * v;
        c.stationarity = std::max(c.stationarity, q[j] * extra / std::max(1.0, q[j]));
      }
      c.payments[i] = p.price(xi);
      c.payment_ratio = std::max(c.payment_ratio, std::abs(c.payments[i] - rho * r * v));
      continue;
    }
    const auto parts = val.partials(xi);
    for (std::size_t j = 0; j < m; ++j) {
      const double norm = std::max(1.0, q[j]);
      if (!parts[j]) {
        if (xi[j] > 0.0) c.stationarity = kInf;
        else c.waived.emplace_back(i, j);
        continue;
      }
      const double g = *parts[j] == 0.0 ? 0.0 : w * *parts[j];
      const double viol = xi[j] > 0.0 ? std::abs(q[j] - g) : std::max(0.0, g - q[j]);
      c.stationarity = std::max(c.stationarity, viol / norm);
    }
    c.payments[i] = p.price(xi);
    c.payment_ratio = std::max(c.payment_ratio, std::abs(c.payments[i] - rho * r * v));
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double s = x.column_sum(j);
    c.clearing = std::max(c.clearing, std::max(0.0, s - 1.0));
    if (q[j] > 0.0) c.clearing = std::max(c.clearing, std::abs(1.0 - s));
  }
  if (std::isnan(c.stationarity)) c.stationarity = kInf;
  c.pass = c.stationarity <= tolerance && c.clearing <= tolerance &&
           c.payment_ratio <= tolerance;
  return c;
}

Certificate certify_allocation(const Instance& instance, const Allocation& x,
                               double tolerance) {
  std::vector<double> q;
  try {
    q = extract_multipliers(instance, x, tolerance);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InconsistentMultipliers) throw;
    Certificate bad;
    bad.tolerance = tolerance;
    bad.stationarity = kInf;
    bad.payments.assign(instance.agents(), 0.0);
    return bad;
  }
  return we_certificate(instance, x, make_pricing_rule(q, instance.rho(), instance.degree()),
                        tolerance);
}

namespace {

// Largest t >= 0 with p(base + t e_k) <= budget, capped at `cap`.
double max_affordable(const PricingRule& p, std::vector<double> base, std::size_t k,
                      double budget, double cap) {
  auto cost = [&](double t) {
    base[k] = t;
    return p.price(base);
  };
  if (cost(cap) <= budget) return cap;
  double lo = 0.0, hi = cap;
  if (cost(lo) > budget) return 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cost(mid) <= budget ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

FisherReport to_fisher(const Instance& instance, const Allocation& x, const PricingRule& p,
                       double tolerance) {
  const Certificate cert = we_certificate(instance, x, p, tolerance);
  if (!cert.pass) {
    fail(ErrorKind::NotEquilibrium, "allocation and pricing rule do not form an equilibrium");
  }
  const std::size_t n = instance.agents(), m = instance.goods();
  FisherReport out;
  out.budgets = cert.payments;
  out.worst_gain = -kInf;
  const auto& q = p.q();

  // Per-good reach within budget B when everything else is zero; goods with
  // q_j = 0 are free and probed up to twice the supply.
  auto reach = [&](double budget, std::size_t j) {
    if (q[j] <= 0.0) return 2.0;
    const double s = p.rho() == 1.0 ? budget / p.scale() : std::pow(budget / p.scale(), p.rho());
    return s / q[j];
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto& val = instance.valuation(i);
    const auto xi = x.bundle(i);
    const double base = val.value(xi);
    const double budget = out.budgets[i];
    double gain = -kInf;
    auto probe = [&](const std::vector<double>& y) {
      if (p.price(y) > budget + 1e-9) return;
      gain = std::max(gain, val.value(y) - base);
    };
    std::vector<double> y(m, 0.0);
    if (m == 1) {
      const double hi = reach(budget, 0);
      const int steps = 20000;
      for (int k = 0; k <= steps; ++k) {
        y[0] = hi * k / steps;
        probe(y);
      }
    } else if (m == 2) {
      const double h0 = reach(budget, 0);
      const int steps = 400;
      for (int a = 0; a <= steps; ++a) {
        y[0] = h0 * a / steps;
        // Monotone v: only the top of each affordable column matters.
        y[1] = max_affordable(p, y, 1, budget, reach(budget, 1));
        probe(y);
      }
    } else {
      probe(std::vector<double>(xi.begin(), xi.end()));
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
          if (j == k) continue;
          for (int t = 0; t <= 200; ++t) {
            std::vector<double> z(xi.begin(), xi.end());
            z[j] *= 1.0 - t / 200.0;
            z[k] = 0.0;
            z[k] = max_affordable(p, z, k, budget, z[k] + reach(budget, k));
            probe(z);
          }
        }
      }
    }
    out.worst_gain = std::max(out.worst_gain, gain);
  }
  out.fisher_pass = out.worst_gain <= 1e-6;
  return out;
}

WeightedShiftReport weighted_shift_certificate(const Instance& instance, const Allocation& x,
                                               double rho, double tolerance) {
  const Instance at_rho = instance.with_rho(rho);
  const Certificate cert = certify_allocation(at_rho, x, tolerance);
  if (!cert.pass) {
    fail(ErrorKind::NotEquilibrium, "allocation does not certify at the given rho");
  }
  WeightedShiftReport out;
  out.weights = at_rho.values(x);
  const WelfareObjective shifted = rho == 1.0 ? WelfareObjective::nash(out.weights)
                                              : WelfareObjective::ces(rho - 1.0, out.weights);
  try {
    out.multipliers = extract_multipliers(at_rho, x, shifted, tolerance);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InconsistentMultipliers) throw;
    out.residual = kInf;
    out.pass = false;
    return out;
  }
  out.residual = kkt_residual(at_rho, x, out.multipliers, shifted).max();
  out.pass = out.residual <= tolerance;
  return out;
}

}  // namespace cesmarket
