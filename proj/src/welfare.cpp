#include "cesmarket/welfare.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "cesmarket/errors.hpp"

namespace cesmarket {

namespace {

void check_sizes(std::size_t agents, std::size_t mults) {
  if (mults != 0 && mults != agents) {
    fail(ErrorKind::DimensionMismatch,
         "multiplier vector must have one entry per agent");
  }
}

}  // namespace

void WelfareParams::validate(std::size_t agents) const {
  if (!std::isfinite(rho) || rho == 0.0 || rho > 1.0) {
    std::ostringstream os;
    os << "CES rho must lie in (-inf,0) U (0,1], got " << rho;
    fail(ErrorKind::BadRho, os.str());
  }
  check_sizes(agents, multipliers.size());
  bool any = multipliers.empty();
  for (double a : multipliers) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      fail(ErrorKind::BadParameter, "multipliers must be finite and >= 0");
    }
    any = any || a > 0.0;
  }
  if (!any) fail(ErrorKind::BadParameter, "multipliers must not all be zero");
}

static double weighted_power_sum(const WelfareParams& params,
                                 std::span<const double> values) {
  params.validate(values.size());
  if (values.empty()) fail(ErrorKind::EmptyInput, "no agent values");
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorKind::DomainError, "values must be finite and >= 0");
    }
    if (params.rho < 0.0 && v == 0.0) {
      fail(ErrorKind::DomainError, "CES welfare with rho < 0 needs v_i > 0");
    }
    s += params.multiplier(i) * std::pow(v, params.rho);
  }
  return s;
}

double ces_welfare(const WelfareParams& params, std::span<const double> values) {
  return std::pow(weighted_power_sum(params, values), 1.0 / params.rho);
}

double ces_objective(const WelfareParams& params, std::span<const double> values) {
  return weighted_power_sum(params, values) / params.rho;
}

double nash_objective(std::span<const double> a, std::span<const double> values) {
  check_sizes(values.size(), a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double ai = a.empty() ? 1.0 : a[i];
    if (ai == 0.0) continue;
    if (!(values[i] > 0.0)) {
      fail(ErrorKind::DomainError, "Nash objective needs every v_i > 0");
    }
    s += ai * std::log(values[i]);
  }
  return s;
}

WelfareObjective WelfareObjective::ces(double rho, std::vector<double> multipliers) {
  WelfareParams{rho, multipliers}.validate(multipliers.size());
  return WelfareObjective(false, rho, std::move(multipliers));
}

WelfareObjective WelfareObjective::nash(std::vector<double> multipliers) {
  return WelfareObjective(true, 0.0, std::move(multipliers));
}

double WelfareObjective::value(std::span<const double> values) const {
  if (nash_) return nash_objective(multipliers_, values);
  return ces_objective(WelfareParams{rho_, multipliers_}, values);
}

double WelfareObjective::marginal_scale(std::size_t i, double v) const {
  const double a = multiplier(i);
  if (a == 0.0) return 0.0;
  if (nash_) {
    return v > 0.0 ? a / v : std::numeric_limits<double>::infinity();
  }
  if (rho_ == 1.0) return a;
  if (v == 0.0) {
    return rho_ < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return a * std::pow(v, rho_ - 1.0);
}

static ObjectiveQuery assemble(const Instance& instance,
                               const std::vector<double>& values,
                               const std::vector<std::vector<double>>& grads) {
  const double rho = instance.rho();
  ObjectiveQuery out;
  out.gradient = Allocation(instance.agents(), instance.goods());
  out.implied_values = values;
  double total = 0.0;
  for (std::size_t i = 0; i < instance.agents(); ++i) {
    const double v = values[i];
    if (rho < 1.0 && !(v > 0.0)) {
      fail(ErrorKind::DomainError,
           "agent value is zero; objective gradient diverges for rho < 1");
    }
    total += std::pow(v, rho);
    const double scale = rho == 1.0 ? 1.0 : std::pow(v, rho - 1.0);
    for (std::size_t j = 0; j < instance.goods(); ++j) {
      out.gradient(i, j) = grads[i][j] * scale;
    }
  }
  out.objective = total / rho;
  return out;
}

ObjectiveQuery objective_and_gradient_via_val_gradients(const Instance& instance,
                                                        const Allocation& x) {
  instance.check_allocation(x);
  const double r = instance.degree();
  std::vector<std::vector<double>> grads(instance.agents());
  std::vector<double> values(instance.agents());
  for (std::size_t i = 0; i < instance.agents(); ++i) {
    grads[i] = instance.valuation(i).gradient(x.bundle(i));
    double s = 0.0;
    for (std::size_t j = 0; j < instance.goods(); ++j) s += x(i, j) * grads[i][j];
    values[i] = std::max(0.0, s / r);
  }
  return assemble(instance, values, grads);
}

ObjectiveQuery objective_and_gradient_direct(const Instance& instance,
                                             const Allocation& x) {
  instance.check_allocation(x);
  std::vector<std::vector<double>> grads(instance.agents());
  std::vector<double> values(instance.agents());
  for (std::size_t i = 0; i < instance.agents(); ++i) {
    grads[i] = instance.valuation(i).gradient(x.bundle(i));
    values[i] = instance.valuation(i).value(x.bundle(i));
  }
  return assemble(instance, values, grads);
}

}  // namespace cesmarket
