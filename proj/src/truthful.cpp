#include "cesmarket/truthful.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cesmarket/errors.hpp"

namespace cesmarket {

void BidProfile::validate() const {
  if (bids.empty()) fail(ErrorKind::EmptyInput, "no bids");
  for (double b : bids) {
    if (!(b > 0.0) || !std::isfinite(b)) {
      std::ostringstream os;
      os << "bids must be finite and > 0, got " << b;
      fail(ErrorKind::BadBid, os.str());
    }
  }
  if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::BadParameter, "degree r must lie in (0,1]");
  if (!(rho > 0.0 && rho < 1.0)) {
    std::ostringstream os;
    os << "the mechanism needs rho in (0,1), got " << rho;
    fail(ErrorKind::BadRho, os.str());
  }
}

Allocation truthful_allocation(const BidProfile& profile) {
  profile.validate();
  const std::size_t n = profile.bids.size();
  const double a = profile.alpha();
  const double bmax = *std::max_element(profile.bids.begin(), profile.bids.end());
  Allocation x(n, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = std::pow(profile.bids[i] / bmax, a);
    s += x(i, 0);
  }
  for (std::size_t i = 0; i < n; ++i) x(i, 0) /= s;
  return x;
}

namespace {

struct Panel {
  double a, b, fa, fm, fb, whole;
};

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double refine(const std::function<double(double)>& f, const Panel& p, double tol, int depth) {
  const double m = 0.5 * (p.a + p.b);
  const double lm = 0.5 * (p.a + m), rm = 0.5 * (m + p.b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(p.a, m, p.fa, flm, p.fm);
  const double right = simpson(m, p.b, p.fm, frm, p.fb);
  const double delta = left + right - p.whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) {
    std::ostringstream os;
    os << "adaptive Simpson hit its depth limit on [" << p.a << ", " << p.b << "]";
    fail(ErrorKind::QuadratureFailure, os.str());
  }
  return refine(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tol, depth - 1) +
         refine(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  if (!(tol > 0.0)) fail(ErrorKind::BadParameter, "quadrature tolerance must be > 0");
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return refine(f, {a, b, fa, fm, fb, simpson(a, b, fa, fm, fb)}, tol, max_depth);
}

double truthful_payment(const BidProfile& profile, std::size_t i, double quad_tol) {
  profile.validate();
  if (i >= profile.bids.size()) fail(ErrorKind::DimensionMismatch, "agent index out of range");
  if (!(quad_tol > 0.0)) fail(ErrorKind::BadParameter, "quad_tol must be > 0");
  const double a = profile.alpha();
  const double r = profile.r;
  double S = 0.0;
  for (std::size_t k = 0; k < profile.bids.size(); ++k) {
    if (k != i) S += std::pow(profile.bids[k], a);
  }
  if (S == 0.0) return 0.0;
  const double bi = profile.bids[i];
  const double coeff = r * a * S;
  // b = bi t^g flattens the b^{r alpha} cusp at 0 so Simpson converges fast.
  const double g = std::max(1.0, 5.0 / (r * a + 1.0));
  auto integrand = [&](double t) {
    if (t <= 0.0) return 0.0;
    const double b = bi * std::pow(t, g);
    const double jac = bi * g * std::pow(t, g - 1.0);
    return std::pow(b, r * a) / std::pow(std::pow(b, a) + S, r + 1.0) * jac;
  };
  return coeff * adaptive_simpson(integrand, 0.0, 1.0, quad_tol / coeff);
}

BestResponseScan scan_best_response(double true_w, std::span<const double> others, double r,
                                    double rho, std::size_t grid, double quad_tol) {
  if (!(true_w > 0.0)) fail(ErrorKind::BadBid, "true weight must be > 0");
  if (grid < 2) fail(ErrorKind::BadParameter, "grid needs at least two points");
  BestResponseScan out;
  const double lo = 0.25 * true_w, hi = 4.0 * true_w;
  out.step = (hi - lo) / static_cast<double>(grid - 1);
  BidProfile profile;
  profile.r = r;
  profile.rho = rho;
  profile.bids.push_back(true_w);
  profile.bids.insert(profile.bids.end(), others.begin(), others.end());
  profile.validate();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid; ++k) {
    const double b = lo + out.step * static_cast<double>(k);
    profile.bids[0] = b;
    const double x = truthful_allocation(profile)(0, 0);
    const double u = true_w * std::pow(x, r) - truthful_payment(profile, 0, quad_tol);
    out.bids.push_back(b);
    out.utilities.push_back(u);
    if (u > best) {
      best = u;
      out.best_index = k;
      out.best_bid = b;
    }
  }
  return out;
}

double best_response_scan(double true_w, std::span<const double> others, double r, double rho,
                          std::size_t grid) {
  return scan_best_response(true_w, others, r, rho, grid).best_bid;
}

VcgOutcome vcg_single_good(std::span<const double> w) {
  if (w.empty()) fail(ErrorKind::EmptyInput, "no bidders");
  for (double wi : w) {
    if (!(wi >= 0.0) || !std::isfinite(wi)) fail(ErrorKind::BadBid, "weights must be finite and >= 0");
  }
  const std::size_t n = w.size();
  VcgOutcome out;
  out.winner = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
  out.allocation = Allocation(n, 1);
  out.allocation(out.winner, 0) = 1.0;
  out.payments.assign(n, 0.0);
  double second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != out.winner) second = std::max(second, w[i]);
  }
  out.payments[out.winner] = second;
  return out;
}

}  // namespace cesmarket
