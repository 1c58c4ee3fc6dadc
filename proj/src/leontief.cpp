#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "cesmarket/solver.hpp"

namespace cesmarket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd weight_matrix(const Instance& inst) {
  const std::size_t n = inst.agents(), m = inst.goods();
  MatrixXd W(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = std::get_if<Valuation::LeontiefParams>(&inst.valuation(i).params());
    if (!p) fail(ErrorKind::NotLeontief, "every valuation must be leontief");
    for (std::size_t j = 0; j < m; ++j) W(static_cast<Index>(i), static_cast<Index>(j)) = p->weights[j];
  }
  return W;
}

// Dual of max (1/rho) sum alpha^rho s.t. W^T alpha <= s:
//   D(q) = s.q + ((1-rho)/rho) sum_i (w_i.q)^{-rho/(1-rho)},  q >= 0.
struct Dual {
  const MatrixXd& W;
  const VectorXd& s;
  double rho;

  double value(const VectorXd& q) const {
    const VectorXd t = W * q;
    if ((t.array() <= 0.0).any()) return kInf;
    const double k = rho / (1.0 - rho);
    double acc = s.dot(q);
    for (Index i = 0; i < t.size(); ++i) acc += (1.0 - rho) / rho * std::pow(t[i], -k);
    return acc;
  }

  VectorXd alphas(const VectorXd& q) const {
    const VectorXd t = W * q;
    VectorXd a(t.size());
    for (Index i = 0; i < t.size(); ++i) a[i] = std::pow(t[i], -1.0 / (1.0 - rho));
    return a;
  }

  VectorXd gradient(const VectorXd& q) const { return s - W.transpose() * alphas(q); }

  MatrixXd hessian(const VectorXd& q) const {
    const VectorXd t = W * q;
    VectorXd c(t.size());
    for (Index i = 0; i < t.size(); ++i) {
      c[i] = std::pow(t[i], -1.0 / (1.0 - rho) - 1.0) / (1.0 - rho);
    }
    return W.transpose() * c.asDiagonal() * W;
  }
};

struct DualSolution {
  VectorXd q;
  std::size_t iterations = 0;
  double proj_grad = kInf;
};

double projected_gradient_norm(const Dual& D, const VectorXd& q, const VectorXd& g) {
  double pg = 0.0;
  for (Index j = 0; j < q.size(); ++j) {
    if (q[j] <= 1e-14 && g[j] > 0.0) continue;
    pg = std::max(pg, std::abs(g[j]) / std::max(1.0, D.s[j]));
  }
  return pg;
}

DualSolution projected_newton(const Dual& D, std::size_t max_iters) {
  const Index m = D.W.cols();
  DualSolution out;
  VectorXd q = VectorXd::Ones(m);
  double f = D.value(q);
  std::size_t it = 0;
  for (; it < max_iters; ++it) {
    const VectorXd g = D.gradient(q);
    std::vector<char> active(static_cast<std::size_t>(m), 0);
    for (Index j = 0; j < m; ++j) active[static_cast<std::size_t>(j)] = q[j] <= 1e-14 && g[j] > 0.0;
    const double pg = projected_gradient_norm(D, q, g);
    out.proj_grad = pg;
    if (pg <= 1e-14) break;

    std::vector<Index> free;
    for (Index j = 0; j < m; ++j) {
      if (!active[static_cast<std::size_t>(j)]) free.push_back(j);
    }
    const MatrixXd H = D.hessian(q);
    const Index nf = static_cast<Index>(free.size());
    MatrixXd Hf(nf, nf);
    VectorXd gf(nf);
    for (Index a = 0; a < nf; ++a) {
      gf[a] = g[free[static_cast<std::size_t>(a)]];
      for (Index b = 0; b < nf; ++b) {
        Hf(a, b) = H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
      }
    }
    const double mu = 1e-12 * std::max(1.0, Hf.diagonal().cwiseAbs().maxCoeff());
    Hf.diagonal().array() += mu;
    const VectorXd df = -Hf.ldlt().solve(gf);
    VectorXd dir = VectorXd::Zero(m);
    for (Index a = 0; a < nf; ++a) dir[free[static_cast<std::size_t>(a)]] = df[a];

    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 80; ++bt) {
      const VectorXd trial = (q + t * dir).cwiseMax(0.0);
      const double ft = D.value(trial);
      // Close to the optimum f changes below rounding; fall back to the
      // projected gradient as the merit function there.
      const bool flat = std::isfinite(ft) && ft <= f + 1e-13 * std::max(1.0, std::abs(f)) &&
                        projected_gradient_norm(D, trial, D.gradient(trial)) < 0.5 * pg;
      if (ft <= f + 1e-4 * g.dot(trial - q) || flat) {
        moved = (trial - q).lpNorm<Eigen::Infinity>() > 0.0;
        q = trial;
        f = ft;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  for (Index j = 0; j < m; ++j) {
    if (q[j] < 1e-14) q[j] = 0.0;
  }
  out.q = q;
  out.iterations = it;
  return out;
}

// Vertices of {y >= 0, A y <= b} (A is k x d), best by c.y. Ties keep the
// first vertex found.
std::optional<VectorXd> best_vertex(const MatrixXd& A, const VectorXd& b, const VectorXd& c,
                                    bool maximize) {
  const Index d = c.size();
  const Index k = A.rows();
  const Index total = d + k;
  std::vector<Index> pick(static_cast<std::size_t>(d));
  std::optional<VectorXd> best;
  double best_val = 0.0;
  std::vector<char> mask(static_cast<std::size_t>(total), 0);
  std::fill(mask.end() - d, mask.end(), 1);
  do {
    MatrixXd M(d, d);
    VectorXd rhs(d);
    Index row = 0;
    for (Index r = 0; r < total; ++r) {
      if (!mask[static_cast<std::size_t>(r)]) continue;
      if (r < d) {
        M.row(row).setZero();
        M(row, r) = 1.0;
        rhs[row] = 0.0;
      } else {
        M.row(row) = A.row(r - d);
        rhs[row] = b[r - d];
      }
      ++row;
    }
    Eigen::FullPivLU<MatrixXd> lu(M);
    if (!lu.isInvertible()) continue;
    const VectorXd y = lu.solve(rhs);
    if ((y.array() < -1e-12).any()) continue;
    if (((A * y - b).array() > 1e-12).any()) continue;
    const double val = c.dot(y);
    if (!best || (maximize ? val > best_val + 1e-12 : val < best_val - 1e-12)) {
      best = y.cwiseMax(0.0);
      best_val = val;
    }
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

}  // namespace

LeontiefResult solve_leontief(const Instance& instance, const SolveOptions& opts,
                              std::span<const double> supplies) {
  const MatrixXd W = weight_matrix(instance);
  const std::size_t n = instance.agents(), m = instance.goods();
  VectorXd s = VectorXd::Ones(static_cast<Index>(m));
  if (!supplies.empty()) {
    if (supplies.size() != m) fail(ErrorKind::DimensionMismatch, "one supply per good");
    for (std::size_t j = 0; j < m; ++j) {
      if (!(supplies[j] > 0.0) || !std::isfinite(supplies[j])) {
        fail(ErrorKind::BadParameter, "supplies must be finite and > 0");
      }
      s[static_cast<Index>(j)] = supplies[j];
    }
  }
  const double rho = instance.rho();

  VectorXd alpha, q;
  std::size_t iterations = 0;
  if (rho < 1.0) {
    const Dual D{W, s, rho};
    const DualSolution sol = projected_newton(D, opts.max_iters);
    if (!(sol.proj_grad <= std::max(1e-10, 1e-3 * opts.tolerance))) {
      std::ostringstream os;
      os << "leontief dual did not converge (projected gradient " << sol.proj_grad << ")";
      fail(ErrorKind::DidNotConverge, os.str());
    }
    q = sol.q;
    alpha = D.alphas(q);
    iterations = sol.iterations;
  } else {
    // max 1.alpha s.t. W^T alpha <= s, and its dual min s.q s.t. -W q <= -1.
    const auto primal = best_vertex(W.transpose(), s, VectorXd::Ones(static_cast<Index>(n)), true);
    const auto dual = best_vertex(-W, -VectorXd::Ones(static_cast<Index>(n)), s, false);
    if (!primal || !dual) fail(ErrorKind::DidNotConverge, "leontief LP has no vertex");
    alpha = *primal;
    q = *dual;
  }

  LeontiefResult out;
  out.allocation = Allocation(n, m);
  out.duals = Allocation(n, m);
  out.alphas.assign(alpha.data(), alpha.data() + alpha.size());
  out.multipliers.assign(q.data(), q.data() + q.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double w = W(static_cast<Index>(i), static_cast<Index>(j));
      out.allocation(i, j) = w * out.alphas[i];
      out.duals(i, j) = w > 0.0 ? out.multipliers[j] : 0.0;
    }
  }
  double obj = 0.0;
  for (double a : out.alphas) obj += std::pow(a, rho);
  out.objective = obj / rho;
  out.iterations = iterations;
  return out;
}

}  // namespace cesmarket
