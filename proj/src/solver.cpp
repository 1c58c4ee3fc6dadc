#include "cesmarket/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

namespace cesmarket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kValueFloor = 1e-12;
constexpr double kSurrogate = -1e300;

// exponent e in f_i'(v) = a_i v^e
double scale_exponent(const WelfareObjective& obj) {
  return obj.is_nash() ? -1.0 : obj.rho() - 1.0;
}

double scale_derivative(const WelfareObjective& obj, std::size_t i, double v) {
  const double e = scale_exponent(obj);
  if (e == 0.0) return 0.0;
  return obj.multiplier(i) * e * std::pow(v, e - 1.0);
}

bool good_is_valued(const Instance& inst, std::size_t j) {
  for (const auto& v : inst.valuations()) {
    if (v.values_good(j)) return true;
  }
  return false;
}

// Best value per unit of money for a degree-one valuation facing linear
// prices q: max v(y) subject to q.y = 1.
double value_per_spend(const Valuation& val, std::span<const double> q) {
  const std::size_t m = val.goods();
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Valuation::LinearParams>) {
          double best = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            if (p.weights[j] > 0.0) best = std::max(best, q[j] > 0 ? p.weights[j] / q[j] : kInf);
          }
          return best;
        } else if constexpr (std::is_same_v<P, Valuation::PowerParams>) {
          return q[0] > 0 ? p.weight / q[0] : kInf;
        } else if constexpr (std::is_same_v<P, Valuation::CobbDouglasParams>) {
          double v = p.scale;
          for (std::size_t j = 0; j < m; ++j) {
            if (p.exponents[j] == 0.0) continue;
            if (q[j] <= 0.0) return kInf;
            v *= std::pow(p.exponents[j] / q[j], p.exponents[j]);
          }
          return v;
        } else if constexpr (std::is_same_v<P, Valuation::CesParams>) {
          if (p.sigma == 1.0) {
            double best = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              if (p.weights[j] > 0.0) best = std::max(best, q[j] > 0 ? p.weights[j] / q[j] : kInf);
            }
            return best;
          }
          const double k = 1.0 / (1.0 - p.sigma);
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            if (p.weights[j] == 0.0) continue;
            if (q[j] <= 0.0) return kInf;
            s += std::pow(p.weights[j], k) * std::pow(q[j], -p.sigma * k);
          }
          return std::pow(s, (1.0 - p.sigma) / p.sigma);
        } else {
          return kInf;
        }
      },
      val.params());
}

// g_ij = f_i'(v_i) dv_i/dx_ij, nullopt where the partial diverges.
struct Marginals {
  std::vector<double> values;
  std::vector<std::optional<double>> g;  // row-major n x m
};

Marginals marginals(const Instance& inst, const Allocation& x,
                    const WelfareObjective& obj) {
  const std::size_t n = inst.agents(), m = inst.goods();
  Marginals out;
  out.values.resize(n);
  out.g.resize(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& val = inst.valuation(i);
    const double v = val.value(x.bundle(i));
    out.values[i] = v;
    const auto parts = val.partials(x.bundle(i));
    const double s = obj.marginal_scale(i, v);
    for (std::size_t j = 0; j < m; ++j) {
      if (!parts[j]) continue;
      const double d = *parts[j];
      out.g[i * m + j] = d == 0.0 ? 0.0 : s * d;
    }
  }
  return out;
}

// Objective and gradient at a feasible center, from gradient queries only.
struct Query {
  double value;
  std::vector<double> grad;
};

Query query(const Instance& inst, const std::vector<double>& c,
            const WelfareObjective& obj) {
  const std::size_t n = inst.agents(), m = inst.goods();
  const double r = inst.degree();
  const double e = scale_exponent(obj);
  Query out{0.0, std::vector<double>(n * m, 0.0)};
  std::vector<double> xi(m);
  std::vector<double> values(n);
  bool surrogate = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) xi[j] = std::max(c[i * m + j], kValueFloor);
    const auto grad = inst.valuation(i).gradient(xi);
    double v = 0.0;
    for (std::size_t j = 0; j < m; ++j) v += xi[j] * grad[j];
    v /= r;
    if (v < kValueFloor) {
      if (e < 0.0) surrogate = true;
      v = kValueFloor;
    }
    values[i] = v;
    const double s = obj.marginal_scale(i, v);
    for (std::size_t j = 0; j < m; ++j) out.grad[i * m + j] = s * grad[j];
  }
  out.value = surrogate ? kSurrogate : obj.value(values);
  return out;
}

struct FirstStage {
  Allocation x;
  std::size_t iterations = 0;
};

// Central/deep-cut ellipsoid over the n*m allocation vector.
FirstStage run_ellipsoid(const Instance& inst, const WelfareObjective& obj,
                         const SolveOptions& opts) {
  const std::size_t n = inst.agents(), m = inst.goods();
  const std::size_t d = n * m;
  const double dd = static_cast<double>(d);
  Eigen::VectorXd c = Eigen::VectorXd::Constant(d, 0.5 / static_cast<double>(n));
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d, d) * dd;  // radius sqrt(nm)

  std::vector<double> best(c.data(), c.data() + d);
  double best_value = -kInf;
  bool have_best = false;
  std::size_t last_improvement = 0;
  const std::size_t window = 50 * d;
  std::size_t it = 0;
  std::vector<double> cv(d);
  Eigen::VectorXd a(d);

  for (; it < opts.max_iters; ++it) {
    a.setZero();
    double beta = 0.0;
    bool feasibility_cut = false;
    for (std::size_t k = 0; k < d && !feasibility_cut; ++k) {
      if (c[k] < 0.0) {
        a[k] = -1.0;
        beta = 0.0;
        feasibility_cut = true;
      }
    }
    for (std::size_t j = 0; j < m && !feasibility_cut; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += c[i * m + j];
      if (s > 1.0) {
        for (std::size_t i = 0; i < n; ++i) a[i * m + j] = 1.0;
        beta = 1.0;
        feasibility_cut = true;
      }
    }
    if (!feasibility_cut) {
      for (std::size_t k = 0; k < d; ++k) cv[k] = c[k];
      const Query q = query(inst, cv, obj);
      if (!have_best || q.value > best_value) {
        const double gain = have_best ? q.value - best_value : kInf;
        if (gain > 1e-13 * std::max(1.0, std::abs(q.value))) last_improvement = it;
        best_value = q.value;
        best = cv;
        have_best = true;
      }
      double norm = 0.0;
      for (double gk : q.grad) norm = std::max(norm, std::abs(gk));
      if (!(norm > 0.0) || !std::isfinite(norm)) break;
      for (std::size_t k = 0; k < d; ++k) a[k] = -q.grad[k] / norm;
      beta = a.dot(c);
    }
    if (have_best && it - last_improvement > window) break;

    if (d == 1) {
      const double h = std::sqrt(P(0, 0));
      double lo = c[0] - h, hi = c[0] + h;
      const double cut = beta / a[0];
      if (a[0] > 0) hi = std::min(hi, cut);
      else lo = std::max(lo, cut);
      if (!(hi > lo) || hi - lo < 1e-15) break;
      c[0] = 0.5 * (lo + hi);
      P(0, 0) = 0.25 * (hi - lo) * (hi - lo);
      continue;
    }

    const Eigen::VectorXd Pa = P * a;
    const double aPa = a.dot(Pa);
    if (!(aPa > 1e-300)) break;
    const double root = std::sqrt(aPa);
    double alpha = (a.dot(c) - beta) / root;
    if (alpha >= 1.0) break;
    alpha = std::max(alpha, 0.0);
    const Eigen::VectorXd b = Pa / root;
    c -= (1.0 + dd * alpha) / (dd + 1.0) * b;
    P = (dd * dd / (dd * dd - 1.0)) * (1.0 - alpha * alpha) *
        (P - (2.0 * (1.0 + dd * alpha) / ((dd + 1.0) * (1.0 + alpha))) * (b * b.transpose()));
    P = 0.5 * (P + P.transpose());
    if (P.diagonal().maxCoeff() < 1e-30) break;
  }

  FirstStage out;
  out.x = Allocation(n, m, have_best ? best : std::vector<double>(d, 1.0 / static_cast<double>(n)));
  for (double& v : out.x.data()) v = std::max(v, 0.0);
  out.iterations = it;
  return out;
}

// Euclidean projection of y onto {z >= 0, sum z <= 1}.
void project_capped_simplex(std::vector<double>& y) {
  double s = 0.0;
  for (double& v : y) {
    v = std::max(v, 0.0);
    s += v;
  }
  if (s <= 1.0) return;
  std::vector<double> u(y);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  for (double& v : y) v = std::max(v - theta, 0.0);
}

FirstStage run_projected_gradient(const Instance& inst, const WelfareObjective& obj,
                                  const SolveOptions& opts) {
  const std::size_t n = inst.agents(), m = inst.goods();
  const std::size_t d = n * m;
  std::vector<double> x(d, 1.0 / static_cast<double>(n));
  Query cur = query(inst, x, obj);
  double step = 1e-2;
  std::vector<double> y(d), col(n);
  std::size_t it = 0;
  std::size_t quiet = 0;
  for (; it < opts.max_iters; ++it) {
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t k = 0; k < d; ++k) y[k] = x[k] + step * cur.grad[k];
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = y[i * m + j];
        project_capped_simplex(col);
        for (std::size_t i = 0; i < n; ++i) y[i * m + j] = col[i];
      }
      double lin = 0.0;
      for (std::size_t k = 0; k < d; ++k) lin += cur.grad[k] * (y[k] - x[k]);
      const Query trial = query(inst, y, obj);
      if (trial.value >= cur.value + 1e-4 * lin) {
        const double gain = trial.value - cur.value;
        quiet = gain <= 1e-15 * std::max(1.0, std::abs(cur.value)) ? quiet + 1 : 0;
        x = y;
        cur = trial;
        step = std::min(step * 2.0, 1e6);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || quiet > 50) break;
  }
  return FirstStage{Allocation(n, m, x), it};
}

// Active-set Newton on the KKT system
//   g_ij(x) = q_j  for (i,j) in the support,  sum_i x_ij = 1 for valued goods,
// adjusting the support until off-support entries satisfy g_ij <= q_j.
class Polisher {
 public:
  Polisher(const Instance& inst, const WelfareObjective& obj)
      : inst_(inst), obj_(obj), n_(inst.agents()), m_(inst.goods()),
        in_s_(n_ * m_, 0), alive_(n_, 1), priced_(m_, 0) {
    can_die_ = scale_exponent(obj) == 0.0 && inst.degree() == 1.0;
    for (std::size_t j = 0; j < m_; ++j) priced_[j] = good_is_valued(inst, j);
  }

  std::optional<Allocation> run(const Allocation& start) {
    x_ = start;
    init_support(start);
    for (int round = 0; round < 200; ++round) {
      if (!ensure_holders()) return std::nullopt;
      const Status st = newton();
      if (st == Status::Changed) continue;
      if (st == Status::Stalled) {
        if (!drop_for_spread()) return std::nullopt;
        continue;
      }
      if (!add_violated()) return x_;
    }
    return std::nullopt;
  }

 private:
  enum class Status { Converged, Changed, Stalled };

  bool structural(std::size_t i, std::size_t j) const {
    const auto& v = inst_.valuation(i);
    return alive_[i] && v.values_good(j) && v.singular_at_zero(j);
  }

  std::size_t support_count(std::size_t i) const {
    std::size_t c = 0;
    for (std::size_t j = 0; j < m_; ++j) c += in_s_[i * m_ + j];
    return c;
  }

  bool droppable(std::size_t i, std::size_t j) const {
    if (structural(i, j)) return false;
    return can_die_ || support_count(i) > 1;
  }

  void init_support(const Allocation& start) {
    const double thresh = 1e-7;
    for (std::size_t i = 0; i < n_; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < m_; ++j) {
        if (priced_[j] && inst_.valuation(i).values_good(j) && start(i, j) > thresh) any = true;
      }
      if (can_die_ && !any) alive_[i] = 0;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      std::size_t best_j = m_;
      double best_x = -1.0;
      for (std::size_t j = 0; j < m_; ++j) {
        const std::size_t k = i * m_ + j;
        if (!priced_[j] || !alive_[i]) {
          x_(i, j) = 0.0;
          continue;
        }
        if (inst_.valuation(i).values_good(j) && start(i, j) > best_x) {
          best_x = start(i, j);
          best_j = j;
        }
        in_s_[k] = structural(i, j) || start(i, j) > thresh;
      }
      if (alive_[i] && support_count(i) == 0 && best_j < m_) in_s_[i * m_ + best_j] = 1;
      for (std::size_t j = 0; j < m_; ++j) {
        const std::size_t k = i * m_ + j;
        x_(i, j) = in_s_[k] ? std::max(x_(i, j), 1e-9) : 0.0;
      }
    }
    normalize_columns();
  }

  void normalize_columns() {
    for (std::size_t j = 0; j < m_; ++j) {
      if (!priced_[j]) continue;
      const double s = x_.column_sum(j);
      if (s > 0.0) {
        for (std::size_t i = 0; i < n_; ++i) x_(i, j) /= s;
      }
    }
  }

  // Every valued good needs a holder so its clearing equation is solvable.
  bool ensure_holders() {
    for (std::size_t j = 0; j < m_; ++j) {
      if (!priced_[j]) continue;
      bool held = false;
      for (std::size_t i = 0; i < n_; ++i) held = held || in_s_[i * m_ + j];
      if (held) continue;
      std::size_t pick = n_;
      for (std::size_t i = 0; i < n_; ++i) {
        if (inst_.valuation(i).values_good(j) && (pick == n_ || start_weight(i, j) > start_weight(pick, j))) pick = i;
      }
      if (pick == n_) return false;
      revive(pick);
      in_s_[pick * m_ + j] = 1;
      x_(pick, j) = 1.0;
    }
    return true;
  }

  double start_weight(std::size_t i, std::size_t j) const {
    std::vector<double> probe(m_, 0.0);
    probe[j] = 1.0;
    return inst_.valuation(i).value(probe);
  }

  void revive(std::size_t i) {
    if (alive_[i]) return;
    alive_[i] = 1;
    for (std::size_t j = 0; j < m_; ++j) {
      if (priced_[j] && structural(i, j)) {
        in_s_[i * m_ + j] = 1;
        seed(i, j);
      }
    }
  }

  void seed(std::size_t i, std::size_t j) {
    std::size_t holder = n_;
    for (std::size_t h = 0; h < n_; ++h) {
      if (h != i && in_s_[h * m_ + j] && (holder == n_ || x_(h, j) > x_(holder, j))) holder = h;
    }
    if (holder == n_) {
      x_(i, j) = std::max(x_(i, j), 1e-3);
      return;
    }
    const double moved = 0.01 * x_(holder, j);
    x_(holder, j) -= moved;
    x_(i, j) += moved;
  }

  struct System {
    std::vector<std::size_t> entries;  // flattened (i,j) in support
    std::vector<std::size_t> goods;    // priced goods
    std::vector<std::size_t> good_col;
  };

  System layout() const {
    System s;
    s.good_col.assign(m_, 0);
    for (std::size_t k = 0; k < n_ * m_; ++k) {
      if (in_s_[k]) s.entries.push_back(k);
    }
    for (std::size_t j = 0; j < m_; ++j) {
      if (priced_[j]) {
        s.good_col[j] = s.entries.size() + s.goods.size();
        s.goods.push_back(j);
      }
    }
    return s;
  }

  // Residual vector; empty optional when some marginal is undefined.
  std::optional<Eigen::VectorXd> residual(const System& s, const Allocation& x,
                                          const Eigen::VectorXd& q) const {
    const Marginals mg = marginals(inst_, x, obj_);
    const std::size_t ns = s.entries.size();
    Eigen::VectorXd F(ns + s.goods.size());
    for (std::size_t r = 0; r < ns; ++r) {
      const std::size_t k = s.entries[r];
      const auto& g = mg.g[k];
      if (!g || !std::isfinite(*g)) return std::nullopt;
      const std::size_t j = k % m_;
      const double qj = q[static_cast<Eigen::Index>(s.good_col[j] - ns)];
      F[static_cast<Eigen::Index>(r)] = (*g - qj) / std::max(1.0, std::abs(qj));
    }
    for (std::size_t t = 0; t < s.goods.size(); ++t) {
      F[static_cast<Eigen::Index>(ns + t)] = x.column_sum(s.goods[t]) - 1.0;
    }
    return F;
  }

  Eigen::MatrixXd jacobian(const System& s, const Eigen::VectorXd& q) const {
    const std::size_t ns = s.entries.size();
    const std::size_t dim = ns + s.goods.size();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
    std::vector<long> col_of(n_ * m_, -1);
    for (std::size_t r = 0; r < ns; ++r) col_of[s.entries[r]] = static_cast<long>(r);
    for (std::size_t i = 0; i < n_; ++i) {
      if (support_count(i) == 0) continue;
      const auto& val = inst_.valuation(i);
      const auto xi = x_.bundle(i);
      const double v = val.value(xi);
      const auto grad = val.gradient(xi);
      const auto H = val.hessian(xi);
      const double sc = obj_.marginal_scale(i, v);
      const double dsc = scale_derivative(obj_, i, v);
      for (std::size_t j = 0; j < m_; ++j) {
        const long row = col_of[i * m_ + j];
        if (row < 0) continue;
        const double qj = q[static_cast<Eigen::Index>(s.good_col[j] - ns)];
        const double norm = std::max(1.0, std::abs(qj));
        for (std::size_t k = 0; k < m_; ++k) {
          const long col = col_of[i * m_ + k];
          if (col < 0) continue;
          J(row, col) = (dsc * grad[k] * grad[j] + sc * H[j * m_ + k]) / norm;
        }
        J(row, static_cast<Eigen::Index>(s.good_col[j])) = -1.0 / norm;
      }
    }
    for (std::size_t t = 0; t < s.goods.size(); ++t) {
      const std::size_t j = s.goods[t];
      for (std::size_t i = 0; i < n_; ++i) {
        const long col = col_of[i * m_ + j];
        if (col >= 0) J(static_cast<Eigen::Index>(ns + t), col) = 1.0;
      }
    }
    return J;
  }

  Eigen::VectorXd initial_q(const System& s) const {
    const Marginals mg = marginals(inst_, x_, obj_);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.goods.size()));
    for (std::size_t t = 0; t < s.goods.size(); ++t) {
      const std::size_t j = s.goods[t];
      double sum = 0.0;
      int cnt = 0;
      for (std::size_t i = 0; i < n_; ++i) {
        const auto& g = mg.g[i * m_ + j];
        if (in_s_[i * m_ + j] && g && std::isfinite(*g)) {
          sum += *g;
          ++cnt;
        }
      }
      q[static_cast<Eigen::Index>(t)] = cnt ? sum / cnt : 0.0;
    }
    return q;
  }

  Status newton() {
    const System s = layout();
    const std::size_t ns = s.entries.size();
    q_ = initial_q(s);
    auto F = residual(s, x_, q_);
    if (!F) return Status::Stalled;
    for (int it = 0; it < 100; ++it) {
      const double fn = F->lpNorm<Eigen::Infinity>();
      if (fn <= 1e-13) return Status::Converged;
      const Eigen::MatrixXd J = jacobian(s, q_);
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
      cod.setThreshold(1e-12);
      const Eigen::VectorXd step = -cod.solve(*F);

      // Largest step keeping support entries nonnegative.
      double t = 1.0;
      std::size_t blocking = ns;
      for (std::size_t r = 0; r < ns; ++r) {
        const double xv = x_.data()[s.entries[r]];
        const double dv = step[static_cast<Eigen::Index>(r)];
        if (dv >= 0.0) continue;
        const std::size_t i = s.entries[r] / m_, j = s.entries[r] % m_;
        const double limit = droppable(i, j) ? xv / -dv : 0.5 * xv / -dv;
        if (limit < t) {
          t = limit;
          blocking = droppable(i, j) ? r : ns;
        }
      }
      bool accepted = false;
      for (int bt = 0; bt < 50; ++bt) {
        Allocation trial = x_;
        for (std::size_t r = 0; r < ns; ++r) {
          trial.data()[s.entries[r]] =
              std::max(0.0, x_.data()[s.entries[r]] + t * step[static_cast<Eigen::Index>(r)]);
        }
        if (blocking < ns) trial.data()[s.entries[blocking]] = 0.0;
        const Eigen::VectorXd qt = q_ + t * step.tail(static_cast<Eigen::Index>(s.goods.size()));
        if (blocking < ns) {
          // Entry reached zero: drop it and re-solve on the smaller support.
          x_ = trial;
          q_ = qt;
          in_s_[s.entries[blocking]] = 0;
          return Status::Changed;
        }
        const auto Ft = residual(s, trial, qt);
        if (Ft && Ft->norm() < (1.0 - 1e-4 * t) * F->norm()) {
          x_ = trial;
          q_ = qt;
          F = Ft;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        return F->lpNorm<Eigen::Infinity>() <= 1e-10 ? Status::Converged : Status::Stalled;
      }
    }
    return F->lpNorm<Eigen::Infinity>() <= 1e-10 ? Status::Converged : Status::Stalled;
  }

  // Inconsistent system: the holder with the lowest marginal on the good with
  // the widest spread leaves it.
  bool drop_for_spread() {
    const Marginals mg = marginals(inst_, x_, obj_);
    struct Cand {
      double spread;
      std::size_t j;
    };
    std::vector<Cand> goods;
    for (std::size_t j = 0; j < m_; ++j) {
      double lo = kInf, hi = -kInf;
      int holders = 0;
      for (std::size_t i = 0; i < n_; ++i) {
        if (!in_s_[i * m_ + j]) continue;
        const auto& g = mg.g[i * m_ + j];
        if (!g) continue;
        lo = std::min(lo, *g);
        hi = std::max(hi, *g);
        ++holders;
      }
      if (holders >= 2) goods.push_back({(hi - lo) / std::max(1.0, std::abs(hi)), j});
    }
    std::stable_sort(goods.begin(), goods.end(),
                     [](const Cand& a, const Cand& b) { return a.spread > b.spread; });
    for (const auto& c : goods) {
      std::vector<std::size_t> holders;
      for (std::size_t i = 0; i < n_; ++i) {
        if (in_s_[i * m_ + c.j] && mg.g[i * m_ + c.j]) holders.push_back(i);
      }
      std::stable_sort(holders.begin(), holders.end(), [&](std::size_t a, std::size_t b) {
        return *mg.g[a * m_ + c.j] < *mg.g[b * m_ + c.j];
      });
      for (std::size_t i : holders) {
        if (droppable(i, c.j)) {
          in_s_[i * m_ + c.j] = 0;
          x_(i, c.j) = 0.0;
          if (support_count(i) == 0) alive_[i] = 0;
          normalize_columns();
          return true;
        }
        if (can_die_ && structural(i, c.j)) {
          kill(i);
          return true;
        }
      }
    }
    return false;
  }

  void kill(std::size_t i) {
    alive_[i] = 0;
    for (std::size_t j = 0; j < m_; ++j) {
      in_s_[i * m_ + j] = 0;
      x_(i, j) = 0.0;
    }
    normalize_columns();
  }

  // Adds the most violated off-support entry; false when none is violated.
  bool add_violated() {
    const Marginals mg = marginals(inst_, x_, obj_);
    std::vector<double> q(m_, 0.0);
    {
      const System s = layout();
      for (std::size_t t = 0; t < s.goods.size(); ++t) q[s.goods[t]] = q_[static_cast<Eigen::Index>(t)];
    }
    double worst = 1e-11;
    std::size_t wi = n_, wj = m_;
    bool revive_agent = false;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!alive_[i]) {
        const double rate = obj_.multiplier(i) * value_per_spend(inst_.valuation(i), q);
        if (rate - 1.0 > worst) {
          worst = rate - 1.0;
          wi = i;
          revive_agent = true;
        }
        continue;
      }
      for (std::size_t j = 0; j < m_; ++j) {
        if (!priced_[j] || in_s_[i * m_ + j]) continue;
        const auto& g = mg.g[i * m_ + j];
        if (!g) continue;
        const double viol = (*g - q[j]) / std::max(1.0, q[j]);
        if (viol > worst) {
          worst = viol;
          wi = i;
          wj = j;
          revive_agent = false;
        }
      }
    }
    if (wi == n_) return false;
    if (revive_agent) {
      alive_[wi] = 1;
      bool any = false;
      for (std::size_t j = 0; j < m_; ++j) {
        if (priced_[j] && structural(wi, j)) {
          in_s_[wi * m_ + j] = 1;
          seed(wi, j);
          any = true;
        }
      }
      if (!any) {
        // Linear-like agent: enter through its best value-per-price good.
        std::size_t best = m_;
        double best_rate = -1.0;
        std::vector<double> probe(m_, 0.0);
        for (std::size_t j = 0; j < m_; ++j) {
          if (!priced_[j] || !inst_.valuation(wi).values_good(j)) continue;
          probe.assign(m_, 0.0);
          probe[j] = 1.0;
          const double rate = inst_.valuation(wi).value(probe) / std::max(q[j], 1e-300);
          if (rate > best_rate) {
            best_rate = rate;
            best = j;
          }
        }
        if (best == m_) return false;
        in_s_[wi * m_ + best] = 1;
        seed(wi, best);
      }
      return true;
    }
    in_s_[wi * m_ + wj] = 1;
    seed(wi, wj);
    return true;
  }

  const Instance& inst_;
  const WelfareObjective& obj_;
  std::size_t n_, m_;
  std::vector<char> in_s_;
  std::vector<char> alive_;
  std::vector<char> priced_;
  bool can_die_ = false;
  Allocation x_;
  Eigen::VectorXd q_;
};

// Holder-averaged multipliers without the consistency check.
std::vector<double> loose_multipliers(const Instance& inst, const Allocation& x,
                                      const WelfareObjective& obj) {
  const std::size_t n = inst.agents(), m = inst.goods();
  const Marginals mg = marginals(inst, x, obj);
  std::vector<double> q(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double best_x = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& g = mg.g[i * m + j];
      if (x(i, j) > best_x && g && std::isfinite(*g)) {
        best_x = x(i, j);
        q[j] = *g;
      }
    }
  }
  return q;
}

SolveResult finish(const Instance& inst, const WelfareObjective& obj, Allocation x,
                   std::vector<double> q, std::size_t iterations) {
  SolveResult res;
  res.values = inst.values(x);
  res.objective = obj.value(res.values);
  res.max_kkt_residual = kkt_residual(inst, x, q, obj).max();
  res.allocation = std::move(x);
  res.multipliers = std::move(q);
  res.iterations = iterations;
  return res;
}

void enumerate_compositions(std::size_t parts, std::size_t total,
                            std::vector<std::vector<std::uint32_t>>& out) {
  std::vector<std::uint32_t> cur(parts, 0);
  auto rec = [&](auto&& self, std::size_t k, std::size_t left) -> void {
    if (k + 1 == parts) {
      cur[k] = static_cast<std::uint32_t>(left);
      out.push_back(cur);
      return;
    }
    for (std::size_t a = 0; a <= left; ++a) {
      cur[k] = static_cast<std::uint32_t>(a);
      self(self, k + 1, left - a);
    }
  };
  rec(rec, 0, total);
}

}  // namespace

double default_tolerance() {
  if (const char* env = std::getenv("CES_MARKET_TOL")) {
    char* end = nullptr;
    const double t = std::strtod(env, &end);
    if (end != env && std::isfinite(t) && t > 0.0) return t;
  }
  return 1e-6;
}

Allocation closed_form_single_good(std::span<const double> w, double r, double rho) {
  if (w.empty()) fail(ErrorKind::EmptyInput, "no agents");
  for (double wi : w) {
    if (!(wi > 0.0) || !std::isfinite(wi)) {
      fail(ErrorKind::BadParameter, "single-good weights must be finite and > 0");
    }
  }
  if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::BadParameter, "degree r must lie in (0,1]");
  require_rho_in_unit(rho);
  const std::size_t n = w.size();
  Allocation x(n, 1);
  if (r * rho == 1.0) {
    const auto it = std::max_element(w.begin(), w.end());
    x(static_cast<std::size_t>(it - w.begin()), 0) = 1.0;
    return x;
  }
  const double alpha = rho / (1.0 - r * rho);
  const double wmax = *std::max_element(w.begin(), w.end());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = std::pow(w[i] / wmax, alpha);
    s += x(i, 0);
  }
  for (std::size_t i = 0; i < n; ++i) x(i, 0) /= s;
  return x;
}

SolveResult solve_ces(const Instance& instance, const SolveOptions& opts) {
  return solve_welfare(instance, WelfareObjective::ces(instance.rho()), opts);
}

SolveResult solve_welfare(const Instance& instance, const WelfareObjective& objective,
                          const SolveOptions& opts) {
  if (!instance.all_differentiable()) {
    fail(ErrorKind::UnsupportedValuation,
         "solve_ces needs differentiable valuations; use solve_leontief");
  }
  if (!(opts.tolerance > 0.0)) fail(ErrorKind::BadParameter, "tolerance must be > 0");

  const FirstStage first = opts.method == SolveMethod::Ellipsoid
                               ? run_ellipsoid(instance, objective, opts)
                               : run_projected_gradient(instance, objective, opts);

  SolveResult raw = finish(instance, objective, first.x,
                           loose_multipliers(instance, first.x, objective), first.iterations);
  SolveResult best = raw;

  if (opts.polish) {
    std::optional<Allocation> polished;
    try {
      Polisher pol(instance, objective);
      polished = pol.run(first.x);
    } catch (const Error&) {
      polished.reset();
    }
    if (polished) {
      std::vector<double> q;
      try {
        q = extract_multipliers(instance, *polished, objective, opts.tolerance);
      } catch (const Error&) {
        q = loose_multipliers(instance, *polished, objective);
      }
      SolveResult res = finish(instance, objective, *polished, std::move(q), first.iterations);
      if (res.max_kkt_residual <= opts.tolerance ||
          res.max_kkt_residual < best.max_kkt_residual) {
        best = std::move(res);
      }
    }
  }

  if (!(best.max_kkt_residual <= opts.tolerance)) {
    std::ostringstream os;
    os << "no allocation met the KKT tolerance " << opts.tolerance << " within "
       << opts.max_iters << " iterations (best residual " << best.max_kkt_residual << ")";
    throw ConvergenceError(os.str(), std::move(best));
  }
  return best;
}

std::vector<double> extract_multipliers(const Instance& instance, const Allocation& x,
                                        double tolerance) {
  return extract_multipliers(instance, x, WelfareObjective::ces(instance.rho()), tolerance);
}

std::vector<double> extract_multipliers(const Instance& instance, const Allocation& x,
                                        const WelfareObjective& objective,
                                        double tolerance) {
  instance.check_allocation(x);
  const std::size_t n = instance.agents(), m = instance.goods();
  const Marginals mg = marginals(instance, x, objective);
  std::vector<double> q(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double lo = kInf, hi = -kInf, sum = 0.0;
    int holders = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(x(i, j) > 0.0)) continue;
      const auto& g = mg.g[i * m + j];
      if (!g || !std::isfinite(*g)) {
        fail(ErrorKind::InconsistentMultipliers,
             "a holder's marginal welfare diverges; allocation is not optimal");
      }
      lo = std::min(lo, *g);
      hi = std::max(hi, *g);
      sum += *g;
      ++holders;
    }
    if (holders == 0) continue;
    q[j] = sum / holders;
    if ((hi - lo) / std::max(1.0, std::abs(q[j])) > 10.0 * tolerance) {
      std::ostringstream os;
      os << "holders of good " << j << " disagree on its multiplier (" << lo << " vs "
         << hi << ")";
      fail(ErrorKind::InconsistentMultipliers, os.str());
    }
  }
  return q;
}

KktResidual kkt_residual(const Instance& instance, const Allocation& x,
                         std::span<const double> q, const WelfareObjective& objective) {
  instance.check_allocation(x);
  const std::size_t n = instance.agents(), m = instance.goods();
  if (q.size() != m) fail(ErrorKind::DimensionMismatch, "one multiplier per good");
  const Marginals mg = marginals(instance, x, objective);
  KktResidual out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& g = mg.g[i * m + j];
      const double norm = std::max(1.0, q[j]);
      if (x(i, j) > 0.0) {
        const double r = g && std::isfinite(*g) ? std::abs(q[j] - *g) / norm : kInf;
        out.stationarity = std::max(out.stationarity, r);
      } else if (!g) {
        out.waived.emplace_back(i, j);
      } else {
        out.stationarity = std::max(out.stationarity, std::max(0.0, *g - q[j]) / norm);
      }
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double s = x.column_sum(j);
    out.clearing = std::max(out.clearing, std::max(0.0, s - 1.0));
    if (q[j] > 0.0) out.clearing = std::max(out.clearing, std::abs(1.0 - s));
    if (q[j] < 0.0) out.stationarity = kInf;
  }
  return out;
}

Allocation grid_oracle(const Instance& instance, std::size_t resolution) {
  return grid_oracle(instance, resolution, WelfareObjective::ces(instance.rho()));
}

Allocation grid_oracle(const Instance& instance, std::size_t resolution,
                       const WelfareObjective& objective) {
  if (resolution == 0) fail(ErrorKind::BadParameter, "resolution must be >= 1");
  const std::size_t n = instance.agents(), m = instance.goods();
  // Points per good: C(R + n - 1, n - 1).
  double per_good = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    per_good *= static_cast<double>(resolution + k) / static_cast<double>(k);
  }
  const double total = std::pow(per_good, static_cast<double>(m));
  if (total > kGridLimit) {
    std::ostringstream os;
    os << "grid has " << total << " points, limit " << kGridLimit;
    fail(ErrorKind::TooLarge, os.str());
  }
  std::vector<std::vector<std::uint32_t>> comps;
  enumerate_compositions(n, resolution, comps);
  const double unit = 1.0 / static_cast<double>(resolution);

  std::vector<std::size_t> idx(m, 0);
  Allocation x(n, m), best(n, m);
  double best_value = -kInf;
  std::vector<double> values(n);
  bool first = true;
  for (;;) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& c = comps[idx[j]];
      for (std::size_t i = 0; i < n; ++i) x(i, j) = c[i] * unit;
    }
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = instance.valuation(i).value(x.bundle(i));
      if (objective.is_nash() && objective.multiplier(i) > 0.0 && !(values[i] > 0.0)) {
        finite = false;
      }
    }
    const double f = finite ? objective.value(values) : -kInf;
    if (first || f > best_value) {
      best_value = f;
      best = x;
      first = false;
    }
    std::size_t j = 0;
    while (j < m && ++idx[j] == comps.size()) idx[j++] = 0;
    if (j == m) break;
  }
  return best;
}

}  // namespace cesmarket
