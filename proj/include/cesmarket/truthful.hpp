#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cesmarket/instance.hpp"

namespace cesmarket {

/// Reported single-good weights b_i > 0 with public degree r in (0,1] and
/// rho in (0,1).
struct BidProfile {
  std::vector<double> bids;
  double r = 1.0;
  double rho = 0.5;

  /// Throws BadBid / BadParameter / BadRho.
  void validate() const;
  /// rho / (1 - r rho)
  double alpha() const { return rho / (1.0 - r * rho); }
};

/// x_i = b_i^alpha / sum_k b_k^alpha, as an n x 1 allocation.
Allocation truthful_allocation(const BidProfile& profile);

/// r alpha S * integral_0^{b_i} b^{r alpha} / (b^alpha + S)^{r+1} db with
/// S = sum_{k != i} b_k^alpha, to absolute accuracy quad_tol.
double truthful_payment(const BidProfile& profile, std::size_t i, double quad_tol = 1e-9);

struct BestResponseScan {
  std::vector<double> bids;
  std::vector<double> utilities;
  std::size_t best_index = 0;
  double best_bid = 0.0;
  double step = 0.0;
};

/// Utility w x_i(b)^r - p_i(b) of an agent with true weight w bidding each of
/// `grid` evenly spaced points on [w/4, 4w] against fixed other bids.
BestResponseScan scan_best_response(double true_w, std::span<const double> others, double r,
                                    double rho, std::size_t grid = 400,
                                    double quad_tol = 1e-9);

/// The maximizing bid of scan_best_response.
double best_response_scan(double true_w, std::span<const double> others, double r, double rho,
                          std::size_t grid = 400);

struct VcgOutcome {
  Allocation allocation;
  std::vector<double> payments;
  std::size_t winner = 0;
};

/// Second-price auction of one unit: the lowest-index highest bidder wins
/// and pays the second-highest weight.
VcgOutcome vcg_single_good(std::span<const double> w);

/// Adaptive Simpson on [a, b]. Throws QuadratureFailure when an interval
/// still misses its share of `tol` at `max_depth` halvings.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth = 60);

}  // namespace cesmarket
