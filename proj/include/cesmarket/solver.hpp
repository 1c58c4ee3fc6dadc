#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cesmarket/errors.hpp"
#include "cesmarket/instance.hpp"
#include "cesmarket/welfare.hpp"

namespace cesmarket {

/// 1e-6 unless the CES_MARKET_TOL environment variable holds a positive
/// number.
double default_tolerance();

enum class SolveMethod { Ellipsoid, ProjectedGradient };

struct SolveOptions {
  double tolerance = default_tolerance();
  std::size_t max_iters = 400000;
  SolveMethod method = SolveMethod::Ellipsoid;
  /// Active-set Newton refinement of the first-stage iterate on the KKT
  /// system. Turning it off returns the raw first-stage point.
  bool polish = true;
};

struct SolveResult {
  Allocation allocation;
  std::vector<double> values;
  std::vector<double> multipliers;
  double objective = 0.0;
  std::size_t iterations = 0;
  double max_kkt_residual = 0.0;
};

/// DidNotConverge with the best iterate found.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, SolveResult best)
      : Error(ErrorKind::DidNotConverge, what), best_(std::move(best)) {}
  const SolveResult& best() const noexcept { return best_; }

 private:
  SolveResult best_;
};

/// Optimal single-good split for v_i(x) = w_i x^r. When r = rho = 1 the
/// lowest-index agent of maximal weight receives the whole unit.
Allocation closed_form_single_good(std::span<const double> w, double r, double rho);

/// Maximizes (1/rho) sum_i v_i^rho over feasible allocations.
SolveResult solve_ces(const Instance& instance, const SolveOptions& opts = {});

/// Maximizes an arbitrary separable objective (CES with multipliers, or
/// Nash). The instance's own rho is ignored.
SolveResult solve_welfare(const Instance& instance, const WelfareObjective& objective,
                          const SolveOptions& opts = {});

/// q_j = f_i'(v_i) dv_i/dx_ij averaged over holders of j, 0 for goods nobody
/// holds. Throws InconsistentMultipliers when holders disagree by more than
/// 10 * tolerance (relative).
std::vector<double> extract_multipliers(const Instance& instance, const Allocation& x,
                                        double tolerance = default_tolerance());
std::vector<double> extract_multipliers(const Instance& instance, const Allocation& x,
                                        const WelfareObjective& objective,
                                        double tolerance = default_tolerance());

/// Welfare-program optimality residuals for (x, q).
struct KktResidual {
  /// max over (i,j) of |q_j - g_ij| / max(1, q_j) where x_ij > 0 and
  /// max(0, g_ij - q_j) / max(1, q_j) elsewhere.
  double stationarity = 0.0;
  /// max over goods with q_j > 0 of |1 - sum_i x_ij|, and any over-allocation.
  double clearing = 0.0;
  /// Coordinates skipped because the partial diverges and the agent holds 0.
  std::vector<std::pair<std::size_t, std::size_t>> waived;

  double max() const { return stationarity > clearing ? stationarity : clearing; }
};

KktResidual kkt_residual(const Instance& instance, const Allocation& x,
                         std::span<const double> q, const WelfareObjective& objective);

/// Best full-allocation grid point for ces_objective (or for `objective`).
/// Each good is split in units of 1/resolution. Throws TooLarge above
/// kGridLimit points.
inline constexpr double kGridLimit = 5e7;
Allocation grid_oracle(const Instance& instance, std::size_t resolution);
Allocation grid_oracle(const Instance& instance, std::size_t resolution,
                       const WelfareObjective& objective);

struct LeontiefResult {
  Allocation allocation;
  std::vector<double> alphas;
  std::vector<double> multipliers;
  /// lambda_ij: multiplier of x_ij >= w_ij alpha_i.
  Allocation duals;
  double objective = 0.0;
  std::size_t iterations = 0;
};

/// Leontief specialization: maximize (1/rho) sum_i alpha_i^rho subject to
/// sum_i w_ij alpha_i <= s_j. Supplies default to 1.
LeontiefResult solve_leontief(const Instance& instance, const SolveOptions& opts = {},
                              std::span<const double> supplies = {});

}  // namespace cesmarket
