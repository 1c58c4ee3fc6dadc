#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cesmarket/valuation.hpp"

namespace cesmarket {

/// Feasibility slack on each good's unit supply.
inline constexpr double kSupplySlack = 1e-9;

/// n x m allocation matrix, stored row-major so each agent's bundle is a
/// contiguous span.
class Allocation {
 public:
  Allocation() = default;
  Allocation(std::size_t agents, std::size_t goods, double fill = 0.0)
      : agents_(agents), goods_(goods), data_(agents * goods, fill) {}
  Allocation(std::size_t agents, std::size_t goods, std::vector<double> data);

  std::size_t agents() const noexcept { return agents_; }
  std::size_t goods() const noexcept { return goods_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * goods_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * goods_ + j];
  }

  Bundle bundle(std::size_t i) const {
    return Bundle(data_.data() + i * goods_, goods_);
  }
  std::span<double> row(std::size_t i) {
    return std::span<double>(data_.data() + i * goods_, goods_);
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  double column_sum(std::size_t j) const;

  /// Entries >= 0 and every good allocated at most 1 + kSupplySlack.
  bool feasible() const;

  bool operator==(const Allocation&) const = default;

 private:
  std::size_t agents_ = 0;
  std::size_t goods_ = 0;
  std::vector<double> data_;
};

/// A market: n agents, m unit-supply goods and the inequality-aversion
/// parameter rho. All agents share one homogeneity degree (within 1e-12; a
/// shared degree that close to 1 is reported as exactly 1).
class Instance {
 public:
  Instance(std::vector<Valuation> valuations, double rho);

  std::size_t agents() const noexcept { return valuations_.size(); }
  std::size_t goods() const noexcept { return goods_; }
  double rho() const noexcept { return rho_; }
  double degree() const noexcept { return degree_; }
  const std::vector<Valuation>& valuations() const noexcept {
    return valuations_;
  }
  const Valuation& valuation(std::size_t i) const { return valuations_[i]; }

  bool all_differentiable() const;
  bool all_leontief() const;

  /// Same agents under a different rho in (0, 1].
  Instance with_rho(double rho) const;

  /// v_i(x_i) for every agent.
  std::vector<double> values(const Allocation& x) const;

  void check_allocation(const Allocation& x) const;

 private:
  std::vector<Valuation> valuations_;
  std::size_t goods_ = 0;
  double rho_ = 1.0;
  double degree_ = 1.0;
};

/// Throws BadRho unless rho lies in (0, 1].
void require_rho_in_unit(double rho);

}  // namespace cesmarket
