#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cesmarket/instance.hpp"

namespace cesmarket {

/// Inequality aversion rho in (-inf, 0) U (0, 1] and per-agent multipliers a.
/// An empty multiplier vector means a = (1, ..., 1).
struct WelfareParams {
  double rho = 1.0;
  std::vector<double> multipliers;

  void validate(std::size_t agents) const;
  double multiplier(std::size_t i) const {
    return multipliers.empty() ? 1.0 : multipliers[i];
  }
};

/// (sum_i a_i v_i^rho)^{1/rho}.
double ces_welfare(const WelfareParams& params, std::span<const double> values);

/// (1/rho) sum_i a_i v_i^rho: the convex-program objective, same argmax as
/// ces_welfare.
double ces_objective(const WelfareParams& params, std::span<const double> values);

/// sum_i a_i log v_i. An empty `a` means all ones; agents with a_i = 0 drop out.
double nash_objective(std::span<const double> a, std::span<const double> values);

/// A separable welfare objective W(v) = sum_i f_i(v_i) together with the
/// scale f_i'(v_i) that multiplies dv_i/dx_ij in its gradient. CES uses
/// f_i = a_i v^rho / rho; Nash uses f_i = a_i log v and is its own code path.
class WelfareObjective {
 public:
  static WelfareObjective ces(double rho, std::vector<double> multipliers = {});
  static WelfareObjective nash(std::vector<double> multipliers = {});

  bool is_nash() const noexcept { return nash_; }
  double rho() const noexcept { return rho_; }
  double multiplier(std::size_t i) const {
    return multipliers_.empty() ? 1.0 : multipliers_[i];
  }

  double value(std::span<const double> values) const;

  /// f_i'(v) = a_i v^{rho - 1} (CES) or a_i / v (Nash); +inf at v = 0 when
  /// the exponent is negative.
  double marginal_scale(std::size_t i, double v) const;

 private:
  WelfareObjective(bool nash, double rho, std::vector<double> multipliers)
      : nash_(nash), rho_(rho), multipliers_(std::move(multipliers)) {}

  bool nash_;
  double rho_;
  std::vector<double> multipliers_;
};

struct ObjectiveQuery {
  double objective = 0.0;
  /// d objective / d x_ij, same shape as the allocation.
  Allocation gradient;
  /// v_i recovered from gradients alone via Euler's identity.
  std::vector<double> implied_values;
};

/// Program objective (1/rho) sum_i v_i^rho and its gradient, computed only
/// from valuation gradients: v_i is replaced by r^{-1} sum_j x_ij dv_i/dx_ij
/// and d/dx_ij = dv_i/dx_ij v_i^{rho - 1}.
///
/// Throws DomainError when some implied v_i is 0 and rho < 1; gradient
/// errors propagate.
ObjectiveQuery objective_and_gradient_via_val_gradients(const Instance& instance,
                                                        const Allocation& x);

/// Same quantities evaluated directly from value() and gradient(); the
/// reference route for the gradient-only form above.
ObjectiveQuery objective_and_gradient_direct(const Instance& instance,
                                             const Allocation& x);

}  // namespace cesmarket
