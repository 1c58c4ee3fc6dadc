#include "cesmarket/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "cesmarket/errors.hpp"

namespace cesmarket {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool all_finite_nonneg(const std::vector<double>& w) {
  return std::all_of(w.begin(), w.end(),
                     [](double x) { return std::isfinite(x) && x >= 0.0; });
}

bool any_positive(const std::vector<double>& w) {
  return std::any_of(w.begin(), w.end(), [](double x) { return x > 0.0; });
}

void require_weights(const std::vector<double>& w, const char* what) {
  if (w.empty()) {
    fail(ErrorKind::InvalidValuation, std::string(what) + ": no goods");
  }
  if (!all_finite_nonneg(w)) {
    fail(ErrorKind::InvalidValuation,
         std::string(what) + ": weights must be finite and nonnegative");
  }
  if (!any_positive(w)) {
    fail(ErrorKind::InvalidValuation,
         std::string(what) + ": at least one weight must be positive");
  }
}

void require_degree(double r, const char* what) {
  if (!(r > 0.0 && r <= 1.0)) {
    std::ostringstream os;
    os << what << ": degree " << r << " outside (0, 1]";
    fail(ErrorKind::InvalidValuation, os.str());
  }
}

[[noreturn]] void boundary(const char* what) {
  fail(ErrorKind::BoundaryGradient,
       std::string(what) + ": gradient diverges at a zero coordinate");
}

// Exponents this close to zero come from degrees that are 1 up to rounding.
constexpr double kExponentSlack = 1e-9;

// x^e where x == 0 and e < 0 is reported through `singular`.
double checked_pow(double x, double e, bool& singular) {
  if (e == 0.0) return 1.0;
  if (x == 0.0) {
    if (e < 0.0 && e >= -kExponentSlack) return 1.0;
    if (e < 0.0) singular = true;
    return 0.0;
  }
  return std::pow(x, e);
}

}  // namespace

std::string_view to_string(ValuationKind kind) {
  switch (kind) {
    case ValuationKind::Linear: return "linear";
    case ValuationKind::Power: return "power";
    case ValuationKind::CobbDouglas: return "cobb-douglas";
    case ValuationKind::Ces: return "ces";
    case ValuationKind::Leontief: return "leontief";
  }
  return "unknown";
}

Valuation::Valuation(Params params, std::size_t goods, double degree)
    : params_(std::move(params)), goods_(goods), degree_(degree) {
  check_homogeneity();
}

Valuation Valuation::linear(std::vector<double> weights) {
  require_weights(weights, "linear");
  const auto m = weights.size();
  return Valuation(LinearParams{std::move(weights)}, m, 1.0);
}

Valuation Valuation::power(double weight, double degree) {
  if (!(std::isfinite(weight) && weight > 0.0)) {
    fail(ErrorKind::InvalidValuation, "power: weight must be positive");
  }
  require_degree(degree, "power");
  return Valuation(PowerParams{weight, degree}, 1, degree);
}

Valuation Valuation::cobb_douglas(double scale, std::vector<double> exponents) {
  if (!(std::isfinite(scale) && scale > 0.0)) {
    fail(ErrorKind::InvalidValuation, "cobb-douglas: scale must be positive");
  }
  require_weights(exponents, "cobb-douglas");
  const double r = std::accumulate(exponents.begin(), exponents.end(), 0.0);
  // Exponents read from text rarely sum to exactly 1.
  const double degree = (r > 1.0 && r <= 1.0 + 1e-12) ? 1.0 : r;
  require_degree(degree, "cobb-douglas");
  const auto m = exponents.size();
  return Valuation(CobbDouglasParams{scale, std::move(exponents)}, m, degree);
}

Valuation Valuation::ces(std::vector<double> weights, double sigma,
                         double degree) {
  require_weights(weights, "ces");
  if (!(sigma > 0.0 && sigma <= 1.0)) {
    fail(ErrorKind::InvalidValuation, "ces: sigma outside (0, 1]");
  }
  require_degree(degree, "ces");
  const auto m = weights.size();
  return Valuation(CesParams{std::move(weights), sigma, degree}, m, degree);
}

Valuation Valuation::leontief(std::vector<double> weights) {
  require_weights(weights, "leontief");
  const auto m = weights.size();
  return Valuation(LeontiefParams{std::move(weights)}, m, 1.0);
}

ValuationKind Valuation::kind() const noexcept {
  return static_cast<ValuationKind>(params_.index());
}

void Valuation::check_dims(Bundle x) const {
  if (x.size() != goods_) {
    std::ostringstream os;
    os << "bundle has " << x.size() << " entries, valuation expects "
       << goods_;
    fail(ErrorKind::DimensionMismatch, os.str());
  }
}

void Valuation::check_homogeneity() const {
  const std::size_t m = goods_;
  std::vector<double> p(m), scaled(m);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      p[j] = static_cast<double>((k * 7 + 3 * j) % 11 + 1) / 12.0;
    }
    const double lambda = 0.25 + 0.25 * k;
    for (std::size_t j = 0; j < m; ++j) scaled[j] = lambda * p[j];
    const double base = value(p);
    const double lhs = value(scaled);
    const double rhs = std::pow(lambda, degree_) * base;
    if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, std::abs(rhs))) {
      fail(ErrorKind::InvalidValuation,
           "valuation is not homogeneous of its stated degree");
    }
  }
}

double Valuation::value(Bundle x) const {
  check_dims(x);
  for (double xj : x) {
    if (!std::isfinite(xj) || xj < 0.0) {
      fail(ErrorKind::DomainError, "bundle entries must be finite and >= 0");
    }
  }
  return std::visit(
      overloaded{
          [&](const LinearParams& p) {
            double s = 0.0;
            for (std::size_t j = 0; j < goods_; ++j) s += p.weights[j] * x[j];
            return s;
          },
          [&](const PowerParams& p) { return p.weight * std::pow(x[0], p.degree); },
          [&](const CobbDouglasParams& p) {
            double v = p.scale;
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.exponents[j] > 0.0) v *= std::pow(x[j], p.exponents[j]);
            }
            return v;
          },
          [&](const CesParams& p) {
            double s = 0.0;
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.weights[j] > 0.0) s += p.weights[j] * std::pow(x[j], p.sigma);
            }
            return std::pow(s, p.degree / p.sigma);
          },
          [&](const LeontiefParams& p) {
            double v = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.weights[j] != 0.0) v = std::min(v, x[j] / p.weights[j]);
            }
            return v;
          },
      },
      params_);
}

std::vector<std::optional<double>> Valuation::partials(Bundle x) const {
  check_dims(x);
  std::vector<std::optional<double>> g(goods_);
  std::visit(
      overloaded{
          [&](const LinearParams& p) {
            for (std::size_t j = 0; j < goods_; ++j) g[j] = p.weights[j];
          },
          [&](const PowerParams& p) {
            bool singular = false;
            const double d = p.weight * p.degree * checked_pow(x[0], p.degree - 1.0, singular);
            if (!singular) g[0] = d;
          },
          [&](const CobbDouglasParams& p) {
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.exponents[j] == 0.0) {
                g[j] = 0.0;
                continue;
              }
              bool singular = false;
              double d = p.scale * p.exponents[j] *
                         checked_pow(x[j], p.exponents[j] - 1.0, singular);
              for (std::size_t k = 0; k < goods_; ++k) {
                if (k != j) d *= checked_pow(x[k], p.exponents[k], singular);
              }
              if (!singular) g[j] = d;
            }
          },
          [&](const CesParams& p) {
            std::size_t valued = 0, only = 0;
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.weights[j] > 0.0) {
                ++valued;
                only = j;
              }
            }
            if (valued == 1) {
              // Collapses to w^{degree/sigma} x^degree.
              for (std::size_t j = 0; j < goods_; ++j) g[j] = 0.0;
              bool singular = false;
              const double d = p.degree * std::pow(p.weights[only], p.degree / p.sigma) *
                               checked_pow(x[only], p.degree - 1.0, singular);
              if (singular) {
                g[only].reset();
              } else {
                g[only] = d;
              }
              return;
            }
            double s = 0.0;
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.weights[j] > 0.0) s += p.weights[j] * std::pow(x[j], p.sigma);
            }
            bool s_singular = false;
            const double outer =
                p.degree * checked_pow(s, p.degree / p.sigma - 1.0, s_singular);
            for (std::size_t j = 0; j < goods_; ++j) {
              if (p.weights[j] == 0.0) {
                g[j] = 0.0;
                continue;
              }
              bool singular = s_singular;
              const double inner =
                  p.weights[j] * checked_pow(x[j], p.sigma - 1.0, singular);
              if (!singular) g[j] = outer * inner;
            }
          },
          [&](const LeontiefParams&) {
            fail(ErrorKind::NotDifferentiable,
                 "leontief valuations have no gradient");
          },
      },
      params_);
  return g;
}

std::vector<double> Valuation::gradient(Bundle x) const {
  const auto parts = partials(x);
  std::vector<double> g(goods_);
  for (std::size_t j = 0; j < goods_; ++j) {
    if (!parts[j]) boundary(to_string(kind()).data());
    g[j] = *parts[j];
  }
  return g;
}

std::vector<double> Valuation::hessian(Bundle x) const {
  check_dims(x);
  const std::size_t m = goods_;
  std::vector<double> h(m * m, 0.0);
  std::visit(
      overloaded{
          [&](const LinearParams&) {},
          [&](const PowerParams& p) {
            if (p.degree == 1.0) return;
            if (x[0] == 0.0) boundary("power");
            h[0] = p.weight * p.degree * (p.degree - 1.0) *
                   std::pow(x[0], p.degree - 2.0);
          },
          [&](const CobbDouglasParams& p) {
            const auto& e = p.exponents;
            for (std::size_t j = 0; j < m; ++j) {
              for (std::size_t k = 0; k < m; ++k) {
                const double coeff =
                    j == k ? e[j] * (e[j] - 1.0) : e[j] * e[k];
                if (coeff == 0.0) continue;
                bool singular = false;
                double d = p.scale * coeff;
                for (std::size_t l = 0; l < m; ++l) {
                  double expo = e[l];
                  if (l == j) expo -= 1.0;
                  if (l == k) expo -= 1.0;
                  d *= checked_pow(x[l], expo, singular);
                }
                if (singular) boundary("cobb-douglas");
                h[j * m + k] = d;
              }
            }
          },
          [&](const CesParams& p) {
            const double a = p.degree / p.sigma;
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              if (p.weights[j] > 0.0) s += p.weights[j] * std::pow(x[j], p.sigma);
            }
            bool singular = false;
            std::vector<double> u(m, 0.0);
            for (std::size_t j = 0; j < m; ++j) {
              if (p.weights[j] > 0.0) {
                u[j] = p.weights[j] * p.sigma *
                       checked_pow(x[j], p.sigma - 1.0, singular);
              }
            }
            const double c2 =
                a * (a - 1.0) == 0.0 ? 0.0
                                     : a * (a - 1.0) * checked_pow(s, a - 2.0, singular);
            const double c1 = a * checked_pow(s, a - 1.0, singular);
            for (std::size_t j = 0; j < m; ++j) {
              for (std::size_t k = 0; k < m; ++k) {
                double d = c2 * u[j] * u[k];
                if (j == k && p.weights[j] > 0.0 && p.sigma < 1.0) {
                  d += c1 * p.weights[j] * p.sigma * (p.sigma - 1.0) *
                       checked_pow(x[j], p.sigma - 2.0, singular);
                }
                h[j * m + k] = d;
              }
            }
            if (singular) boundary("ces");
          },
          [&](const LeontiefParams&) {
            fail(ErrorKind::NotDifferentiable,
                 "leontief valuations have no hessian");
          },
      },
      params_);
  return h;
}

bool Valuation::values_good(std::size_t j) const {
  return std::visit(
      overloaded{
          [&](const LinearParams& p) { return p.weights.at(j) > 0.0; },
          [&](const PowerParams&) { return j == 0; },
          [&](const CobbDouglasParams& p) { return p.exponents.at(j) > 0.0; },
          [&](const CesParams& p) { return p.weights.at(j) > 0.0; },
          [&](const LeontiefParams& p) { return p.weights.at(j) > 0.0; },
      },
      params_);
}

bool Valuation::singular_at_zero(std::size_t j) const {
  return std::visit(
      overloaded{
          [&](const LinearParams&) { return false; },
          [&](const PowerParams& p) { return j == 0 && p.degree < 1.0 - kExponentSlack; },
          [&](const CobbDouglasParams& p) {
            return p.exponents.at(j) > 0.0 && p.exponents.at(j) < 1.0 - kExponentSlack;
          },
          [&](const CesParams& p) {
            if (!(p.weights.at(j) > 0.0)) return false;
            const auto valued = std::count_if(p.weights.begin(), p.weights.end(),
                                              [](double w) { return w > 0.0; });
            if (valued == 1) return p.degree < 1.0 - kExponentSlack;
            return p.sigma < 1.0;
          },
          [&](const LeontiefParams&) { return false; },
      },
      params_);
}

double euler_residual(const Valuation& v, Bundle x) {
  const auto g = v.gradient(x);
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * g[j];
  return std::abs(s - v.degree() * v.value(x));
}

}  // namespace cesmarket
