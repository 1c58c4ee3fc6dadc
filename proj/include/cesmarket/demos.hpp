#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cesmarket/instance.hpp"
#include "cesmarket/solver.hpp"

namespace cesmarket {

/// Welfare lost by linear pricing on one good with v_1 = (1+eps) x and
/// v_i = x otherwise: the winner-take-all equilibrium against the optimum.
struct GapReport {
  std::size_t n = 0;
  double eps = 0.0;
  double rho = 0.0;
  double we_welfare = 0.0;
  double opt_welfare = 0.0;
  double ratio = 0.0;
  /// (1 + eps) / n^{1/rho - 1}
  double bound = 0.0;
};

GapReport linear_gap_demo(std::size_t n, double eps, double rho);

enum class ViolationKind { MixedDegree, NegativeRho, NashDifferentiable };

std::string_view to_string(ViolationKind kind);

/// A strictly violated inequality that every equilibrium at the computed
/// optimum would have to satisfy.
struct ViolationReport {
  ViolationKind kind = ViolationKind::MixedDegree;
  double rho = 0.0;
  std::string instance;
  std::string inequality;
  /// Optimal single-good split (x_1, x_2).
  std::vector<double> optimum;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  /// MixedDegree only: margin at the exact optimum,
  /// 4e/(sqrt(1+2e)+sqrt(1-2e)) - 2e with e = x_1 - 1/2.
  double analytic_margin = 0.0;
};

/// `grid` is the number of cells of the 1-D search over x_1 in [0, 1].
ViolationReport exchange_violation_demo(ViolationKind kind, double rho,
                                        std::size_t grid = 1000000);

struct NashPricingReport {
  Allocation allocation;
  std::vector<double> q;
  std::vector<double> spends;
  bool budget_pricing_check = false;
};

/// Nash-welfare optimum with multipliers scaled so every agent spends
/// exactly one unit of budget at linear prices q.
NashPricingReport nash_threshold_pricing(const Instance& instance, const SolveOptions& opts = {});

struct FirstWelfareReport {
  bool holds = false;
  double welfare = 0.0;
  double grid_welfare = 0.0;
  std::vector<double> grid_allocation;
};

/// Confirms (x, linear prices q) is an equilibrium, then that x's
/// utilitarian welfare is at least the grid optimum's. Throws NotEquilibrium
/// naming the failed condition.
FirstWelfareReport first_welfare_check(const Instance& instance, const Allocation& x,
                                       std::span<const double> linear_q);

/// 2000 cells when only one coordinate is free, 200 otherwise.
std::size_t default_grid_resolution(const Instance& instance);

}  // namespace cesmarket
