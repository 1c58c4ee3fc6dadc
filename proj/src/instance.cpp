#include "cesmarket/instance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cesmarket/errors.hpp"

namespace cesmarket {

Allocation::Allocation(std::size_t agents, std::size_t goods,
                       std::vector<double> data)
    : agents_(agents), goods_(goods), data_(std::move(data)) {
  if (data_.size() != agents * goods) {
    fail(ErrorKind::DimensionMismatch, "allocation data has wrong size");
  }
}

double Allocation::column_sum(std::size_t j) const {
  double s = 0.0;
  for (std::size_t i = 0; i < agents_; ++i) s += (*this)(i, j);
  return s;
}

bool Allocation::feasible() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0) return false;
  }
  for (std::size_t j = 0; j < goods_; ++j) {
    if (column_sum(j) > 1.0 + kSupplySlack) return false;
  }
  return true;
}

void require_rho_in_unit(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    std::ostringstream os;
    os << "rho must lie in (0,1], got " << rho;
    fail(ErrorKind::BadRho, os.str());
  }
}

Instance::Instance(std::vector<Valuation> valuations, double rho)
    : valuations_(std::move(valuations)), rho_(rho) {
  if (valuations_.empty()) fail(ErrorKind::EmptyInput, "instance has no agents");
  require_rho_in_unit(rho);
  goods_ = valuations_.front().goods();
  degree_ = valuations_.front().degree();
  for (const auto& v : valuations_) {
    if (v.goods() != goods_) {
      fail(ErrorKind::DimensionMismatch, "agents disagree on the number of goods");
    }
    if (std::abs(v.degree() - degree_) > 1e-12) {
      // Without a shared degree no pricing rule supports the optimum.
      fail(ErrorKind::MixedDegrees,
           "all valuations must share one homogeneity degree");
    }
  }
  // Exponents built by division land a few ulps off 1; degree 1 switches on
  // exact code paths (linear pricing, agents dropping out), so snap it.
  if (std::abs(degree_ - 1.0) <= 1e-12) degree_ = 1.0;
}

bool Instance::all_differentiable() const {
  return std::all_of(valuations_.begin(), valuations_.end(),
                     [](const Valuation& v) { return v.differentiable(); });
}

bool Instance::all_leontief() const {
  return std::all_of(valuations_.begin(), valuations_.end(), [](const Valuation& v) {
    return v.kind() == ValuationKind::Leontief;
  });
}

Instance Instance::with_rho(double rho) const { return Instance(valuations_, rho); }

std::vector<double> Instance::values(const Allocation& x) const {
  check_allocation(x);
  std::vector<double> out(agents());
  for (std::size_t i = 0; i < agents(); ++i) {
    out[i] = valuations_[i].value(x.bundle(i));
  }
  return out;
}

void Instance::check_allocation(const Allocation& x) const {
  if (x.agents() != agents() || x.goods() != goods()) {
    std::ostringstream os;
    os << "allocation is " << x.agents() << "x" << x.goods()
       << ", instance is " << agents() << "x" << goods();
    fail(ErrorKind::DimensionMismatch, os.str());
  }
}

}  // namespace cesmarket
