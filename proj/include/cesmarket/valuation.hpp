#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace cesmarket {

/// Read-only view of one agent's bundle: x_j is the quantity of good j.
using Bundle = std::span<const double>;

enum class ValuationKind { Linear, Power, CobbDouglas, Ces, Leontief };

std::string_view to_string(ValuationKind kind);

/// Agent value function v(x). Every supported family is nonzero, monotone,
/// concave and homogeneous of a stored degree r in (0, 1]; all but Leontief
/// are differentiable on the interior of the orthant.
///
/// Instances are immutable after construction and safe to share between
/// threads.
class Valuation {
 public:
  struct LinearParams {
    std::vector<double> weights;
  };
  /// Single good only: v(x) = weight * x^degree.
  struct PowerParams {
    double weight;
    double degree;
  };
  /// v(x) = scale * prod_j x_j^{e_j}, degree = sum_j e_j.
  struct CobbDouglasParams {
    double scale;
    std::vector<double> exponents;
  };
  /// v(x) = (sum_j w_j x_j^sigma)^{degree / sigma}.
  struct CesParams {
    std::vector<double> weights;
    double sigma;
    double degree;
  };
  /// v(x) = min over {j : w_j != 0} of x_j / w_j.
  struct LeontiefParams {
    std::vector<double> weights;
  };

  using Params = std::variant<LinearParams, PowerParams, CobbDouglasParams,
                              CesParams, LeontiefParams>;

  static Valuation linear(std::vector<double> weights);
  static Valuation power(double weight, double degree);
  static Valuation cobb_douglas(double scale, std::vector<double> exponents);
  static Valuation ces(std::vector<double> weights, double sigma,
                       double degree);
  static Valuation leontief(std::vector<double> weights);

  ValuationKind kind() const noexcept;
  std::size_t goods() const noexcept { return goods_; }
  double degree() const noexcept { return degree_; }
  bool differentiable() const noexcept {
    return kind() != ValuationKind::Leontief;
  }
  const Params& params() const noexcept { return params_; }

  double value(Bundle x) const;

  /// Analytic gradient. Throws NotDifferentiable for Leontief and
  /// BoundaryGradient when some partial diverges at x.
  std::vector<double> gradient(Bundle x) const;

  /// Per-coordinate partials; nullopt marks a coordinate whose partial
  /// diverges at x. Throws NotDifferentiable for Leontief.
  std::vector<std::optional<double>> partials(Bundle x) const;

  /// Row-major m x m Hessian; same error contract as gradient().
  std::vector<double> hessian(Bundle x) const;

  /// True when the partial in coordinate j diverges as x_j -> 0 whenever the
  /// agent values good j, so optimal interior solutions never leave it at 0.
  bool singular_at_zero(std::size_t j) const;

  /// True when the agent's value depends on good j at all.
  bool values_good(std::size_t j) const;

 private:
  Valuation(Params params, std::size_t goods, double degree);
  void check_homogeneity() const;
  void check_dims(Bundle x) const;

  Params params_;
  std::size_t goods_;
  double degree_;
};

/// |sum_j x_j dv/dx_j - r v(x)|; zero for an exactly homogeneous v.
double euler_residual(const Valuation& v, Bundle x);

}  // namespace cesmarket
