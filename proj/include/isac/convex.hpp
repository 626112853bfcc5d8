#pragma once

// Primal log-barrier interior-point solver for smooth convex programs
//
//   minimize   c'x + 1/2 sum_i d_i x_i^2 + sum_k g_k(x)
//   subject to a_r'x <= b_r,  E x = f,  h_m(x) <= 0,  l <= x <= u
//
// with g_k, h_m convex and each touching a small set of variables. The Newton
// system is kept sparse; inequality rows with wide support enter as a low-rank
// correction (Woodbury) and equalities are eliminated through a Schur
// complement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace isac::convex {

/// Hessian entry in the local coordinates of a SmoothFunction.
struct HessianEntry {
  int row;
  int col;
  double value;
};

/// Convex function of x[support]. eval receives the local coordinates; when
/// grad is non-null it must fill support.size() partials, when hess is
/// non-null it appends Hessian entries (both triangles, the same positions on
/// every call). Points outside the domain return +inf or NaN.
struct SmoothFunction {
  std::vector<int> support;
  std::function<double(const double* x, double* grad, std::vector<HessianEntry>* hess)> eval;
};

struct LinearRow {
  std::vector<int> index;
  std::vector<double> coef;
  double rhs = 0.0;

  double dot(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < index.size(); ++i) s += coef[i] * x[index[i]];
    return s;
  }
};

/// sum_r (g_r' x + h_r)^2 + l' x + k over a local support, as a SmoothFunction.
struct SquaredAffineSum {
  std::vector<int> support;
  std::vector<std::vector<double>> g;
  std::vector<double> h;
  std::vector<double> linear;
  double constant = 0.0;

  SmoothFunction build() const {
    SmoothFunction f;
    f.support = support;
    const int s = static_cast<int>(support.size());
    auto g_copy = g;
    auto h_copy = h;
    auto l_copy = linear.empty() ? std::vector<double>(s, 0.0) : linear;
    const double k = constant;
    f.eval = [g_copy, h_copy, l_copy, k, s](const double* x, double* grad,
                                            std::vector<HessianEntry>* hess) {
      double val = k;
      for (int i = 0; i < s; ++i) val += l_copy[i] * x[i];
      if (grad) {
        for (int i = 0; i < s; ++i) grad[i] = l_copy[i];
      }
      for (std::size_t r = 0; r < g_copy.size(); ++r) {
        double a = h_copy[r];
        for (int i = 0; i < s; ++i) a += g_copy[r][i] * x[i];
        val += a * a;
        if (grad) {
          for (int i = 0; i < s; ++i) grad[i] += 2.0 * a * g_copy[r][i];
        }
      }
      if (hess) {
        for (int i = 0; i < s; ++i) {
          for (int j = 0; j < s; ++j) {
            double hij = 0.0;
            for (const auto& gr : g_copy) hij += 2.0 * gr[i] * gr[j];
            hess->push_back({i, j, hij});
          }
        }
      }
      return val;
    };
    return f;
  }
};

struct Program {
  int n = 0;
  Eigen::VectorXd linear_cost;
  Eigen::VectorXd quadratic_cost;  // diagonal, nonnegative
  std::vector<SmoothFunction> cost_terms;
  std::vector<LinearRow> inequalities;  // a'x <= rhs
  std::vector<LinearRow> equalities;    // a'x == rhs
  std::vector<SmoothFunction> constraints;  // h(x) <= 0
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Program() = default;
  explicit Program(int variables)
      : n(variables),
        linear_cost(Eigen::VectorXd::Zero(variables)),
        quadratic_cost(Eigen::VectorXd::Zero(variables)),
        lower(Eigen::VectorXd::Constant(variables, -std::numeric_limits<double>::infinity())),
        upper(Eigen::VectorXd::Constant(variables, std::numeric_limits<double>::infinity())) {}

  void add_inequality(std::vector<int> index, std::vector<double> coef, double rhs) {
    inequalities.push_back({std::move(index), std::move(coef), rhs});
  }
  void add_equality(std::vector<int> index, std::vector<double> coef, double rhs) {
    equalities.push_back({std::move(index), std::move(coef), rhs});
  }
  void set_bounds(int i, double lo, double hi) {
    lower[i] = lo;
    upper[i] = hi;
  }

  double objective(const Eigen::VectorXd& x) const {
    double v = linear_cost.dot(x) + 0.5 * (quadratic_cost.array() * x.array().square()).sum();
    std::vector<double> local;
    for (const auto& term : cost_terms) {
      local.resize(term.support.size());
      for (std::size_t i = 0; i < local.size(); ++i) local[i] = x[term.support[i]];
      v += term.eval(local.data(), nullptr, nullptr);
    }
    return v;
  }

  /// Largest constraint violation at x (0 when feasible).
  double max_violation(const Eigen::VectorXd& x) const {
    double worst = 0.0;
    for (const auto& r : inequalities) worst = std::max(worst, r.dot(x) - r.rhs);
    for (const auto& r : equalities) worst = std::max(worst, std::abs(r.dot(x) - r.rhs));
    std::vector<double> local;
    for (const auto& h : constraints) {
      local.resize(h.support.size());
      for (std::size_t i = 0; i < local.size(); ++i) local[i] = x[h.support[i]];
      const double v = h.eval(local.data(), nullptr, nullptr);
      worst = std::max(worst, std::isfinite(v) ? v : std::numeric_limits<double>::infinity());
    }
    for (int i = 0; i < n; ++i) {
      worst = std::max({worst, lower[i] - x[i], x[i] - upper[i]});
    }
    return worst;
  }
};

enum class SolveStatus { Optimal, Infeasible, IterLimit };

struct SolveOptions {
  double tolerance = 1e-8;  // duality-gap bound m / t at exit
  double mu = 10.0;
  double t0 = 1.0;
  int max_newton = 4000;
  double newton_tolerance = 1e-10;  // half squared Newton decrement
  /// Wide rows (more nonzeros than this) enter the Newton system as low rank.
  int dense_row_threshold = 48;
  /// Phase-one residual below which an interior-free program is loosened.
  double relax_limit = 1e-6;
  double relax_amount = 1e-7;
};

struct SolveOutcome {
  Eigen::VectorXd point;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  SolveStatus status = SolveStatus::Infeasible;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int newton_iterations = 0;
  std::vector<double> stage_objectives;  // objective after each centering stage
  double relaxation = 0.0;  // loosening applied to reach a strict interior
};

namespace detail {

class BarrierSolver {
 public:
  BarrierSolver(const Program& p, const SolveOptions& opt) : p_(p), opt_(opt) {
    for (const auto& r : p_.equalities) {
      for (std::size_t i = 0; i < r.index.size(); ++i) {
        eq_triplets_.emplace_back(static_cast<int>(&r - p_.equalities.data()), r.index[i],
                                  r.coef[i]);
      }
    }
    eq_.resize(static_cast<int>(p_.equalities.size()), p_.n);
    eq_.setFromTriplets(eq_triplets_.begin(), eq_triplets_.end());
    eq_rhs_.resize(eq_.rows());
    for (std::size_t r = 0; r < p_.equalities.size(); ++r) eq_rhs_[r] = p_.equalities[r].rhs;
    barrier_count_ = static_cast<int>(p_.inequalities.size() + p_.constraints.size());
    for (int i = 0; i < p_.n; ++i) {
      barrier_count_ += std::isfinite(p_.lower[i]) + std::isfinite(p_.upper[i]);
    }
  }

  int barrier_count() const { return barrier_count_; }

  /// Strict interior test; smooth constraints evaluated.
  bool strictly_feasible(const Eigen::VectorXd& x) const {
    for (int i = 0; i < p_.n; ++i) {
      if (!(x[i] > p_.lower[i]) || !(x[i] < p_.upper[i])) return false;
    }
    for (const auto& r : p_.inequalities) {
      if (!(r.rhs - r.dot(x) > 0)) return false;
    }
    for (const auto& h : p_.constraints) {
      if (!(eval_local(h, x, nullptr, nullptr) < 0)) return false;
    }
    return true;
  }

  /// Barrier objective t f0 + phi, +inf outside the domain.
  double merit(const Eigen::VectorXd& x, double t) const {
    double phi = 0.0;
    for (int i = 0; i < p_.n; ++i) {
      if (std::isfinite(p_.lower[i])) {
        const double s = x[i] - p_.lower[i];
        if (!(s > 0)) return kInf;
        phi -= std::log(s);
      }
      if (std::isfinite(p_.upper[i])) {
        const double s = p_.upper[i] - x[i];
        if (!(s > 0)) return kInf;
        phi -= std::log(s);
      }
    }
    for (const auto& r : p_.inequalities) {
      const double s = r.rhs - r.dot(x);
      if (!(s > 0)) return kInf;
      phi -= std::log(s);
    }
    for (const auto& h : p_.constraints) {
      const double v = eval_local(h, x, nullptr, nullptr);
      if (!(v < 0)) return kInf;
      phi -= std::log(-v);
    }
    const double f0 = p_.objective(x);
    if (!std::isfinite(f0)) return kInf;
    return t * f0 + phi;
  }

  /// Centers at each t and increases t until the gap bound is met. x must be
  /// strictly feasible and satisfy the equalities. stop(x) ends early.
  SolveStatus minimize(Eigen::VectorXd& x, int& newton_used, double& t_final,
                       std::vector<double>* stage_objectives,
                       const std::function<bool(const Eigen::VectorXd&)>& stop = {}) {
    double t = opt_.t0;
    const int m = std::max(1, barrier_count_);
    while (true) {
      const bool centered = center(x, t, newton_used, stop);
      if (stage_objectives) stage_objectives->push_back(p_.objective(x));
      if (stop && stop(x)) {
        t_final = t;
        return SolveStatus::Optimal;
      }
      if (!centered) {
        t_final = t;
        return SolveStatus::IterLimit;
      }
      if (m / t < opt_.tolerance) break;
      t *= opt_.mu;
    }
    t_final = t;
    return SolveStatus::Optimal;
  }

  /// Infinity norm of the projected Lagrangian gradient using barrier duals.
  double kkt_residual(const Eigen::VectorXd& x, double t) const {
    Eigen::VectorXd g = gradient_objective(x);
    g += gradient_barrier(x) / t;
    if (eq_.rows() > 0) {
      const Eigen::MatrixXd a = Eigen::MatrixXd(eq_);
      const Eigen::VectorXd nu = (a * a.transpose()).ldlt().solve(a * g);
      g -= a.transpose() * nu;
    }
    return g.lpNorm<Eigen::Infinity>();
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  double eval_local(const SmoothFunction& f, const Eigen::VectorXd& x, double* grad,
                    std::vector<HessianEntry>* hess) const {
    local_.resize(f.support.size());
    for (std::size_t i = 0; i < local_.size(); ++i) local_[i] = x[f.support[i]];
    return f.eval(local_.data(), grad, hess);
  }

  Eigen::VectorXd gradient_objective(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = p_.linear_cost + (p_.quadratic_cost.array() * x.array()).matrix();
    std::vector<double> lg;
    for (const auto& term : p_.cost_terms) {
      lg.assign(term.support.size(), 0.0);
      eval_local(term, x, lg.data(), nullptr);
      for (std::size_t i = 0; i < lg.size(); ++i) g[term.support[i]] += lg[i];
    }
    return g;
  }

  Eigen::VectorXd gradient_barrier(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p_.n);
    for (int i = 0; i < p_.n; ++i) {
      if (std::isfinite(p_.lower[i])) g[i] -= 1.0 / (x[i] - p_.lower[i]);
      if (std::isfinite(p_.upper[i])) g[i] += 1.0 / (p_.upper[i] - x[i]);
    }
    for (const auto& r : p_.inequalities) {
      const double s = r.rhs - r.dot(x);
      for (std::size_t i = 0; i < r.index.size(); ++i) g[r.index[i]] += r.coef[i] / s;
    }
    std::vector<double> lg;
    for (const auto& h : p_.constraints) {
      lg.assign(h.support.size(), 0.0);
      const double v = eval_local(h, x, lg.data(), nullptr);
      for (std::size_t i = 0; i < lg.size(); ++i) g[h.support[i]] += lg[i] / (-v);
    }
    return g;
  }

  /// Builds gradient, sparse Hessian part and low-rank factor of t f0 + phi.
  void assemble(const Eigen::VectorXd& x, double t, Eigen::VectorXd& grad,
                std::vector<Eigen::Triplet<double>>& trip, Eigen::MatrixXd& low_rank) const {
    grad = t * gradient_objective(x) + gradient_barrier(x);
    trip.clear();
    std::vector<Eigen::VectorXd> cols;
    for (int i = 0; i < p_.n; ++i) {
      double d = t * p_.quadratic_cost[i];
      if (std::isfinite(p_.lower[i])) d += 1.0 / std::pow(x[i] - p_.lower[i], 2);
      if (std::isfinite(p_.upper[i])) d += 1.0 / std::pow(p_.upper[i] - x[i], 2);
      trip.emplace_back(i, i, d);
    }
    std::vector<HessianEntry> he;
    std::vector<double> lg;
    for (const auto& term : p_.cost_terms) {
      he.clear();
      lg.assign(term.support.size(), 0.0);
      eval_local(term, x, lg.data(), &he);
      for (const auto& e : he) {
        trip.emplace_back(term.support[e.row], term.support[e.col], t * e.value);
      }
    }
    const int wide = opt_.dense_row_threshold;
    for (const auto& r : p_.inequalities) {
      const double s = r.rhs - r.dot(x);
      const int k = static_cast<int>(r.index.size());
      if (k > wide) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(p_.n);
        for (int i = 0; i < k; ++i) c[r.index[i]] += r.coef[i] / s;
        cols.push_back(std::move(c));
      } else {
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            trip.emplace_back(r.index[i], r.index[j], r.coef[i] * r.coef[j] / (s * s));
          }
        }
      }
    }
    for (const auto& h : p_.constraints) {
      he.clear();
      lg.assign(h.support.size(), 0.0);
      const double v = eval_local(h, x, lg.data(), &he);
      const double inv = 1.0 / (-v);
      for (const auto& e : he) {
        trip.emplace_back(h.support[e.row], h.support[e.col], e.value * inv);
      }
      const int k = static_cast<int>(h.support.size());
      if (k > wide) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(p_.n);
        for (int i = 0; i < k; ++i) c[h.support[i]] += lg[i] * inv;
        cols.push_back(std::move(c));
      } else {
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            trip.emplace_back(h.support[i], h.support[j], lg[i] * lg[j] * inv * inv);
          }
        }
      }
    }
    low_rank.resize(p_.n, static_cast<int>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) low_rank.col(static_cast<int>(c)) = cols[c];
  }

  /// Factorizes S + U U' and solves against the columns of rhs.
  bool factorize(const std::vector<Eigen::Triplet<double>>& trip, const Eigen::MatrixXd& u) {
    hess_.resize(p_.n, p_.n);
    hess_.setFromTriplets(trip.begin(), trip.end());
    if (!pattern_ready_) {
      llt_.analyzePattern(hess_);
      pattern_ready_ = true;
    }
    double scale = 0.0;
    for (int k = 0; k < hess_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(hess_, k); it; ++it) {
        if (it.row() == it.col()) scale = std::max(scale, std::abs(it.value()));
      }
    }
    double delta = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::SparseMatrix<double> h = hess_;
      if (delta > 0) {
        for (int i = 0; i < p_.n; ++i) h.coeffRef(i, i) += delta;
      }
      llt_.factorize(h);
      if (llt_.info() == Eigen::Success) {
        u_ = u;
        if (u_.cols() > 0) {
          s_inv_u_ = llt_.solve(u_);
          const Eigen::MatrixXd cap =
              Eigen::MatrixXd::Identity(u_.cols(), u_.cols()) + u_.transpose() * s_inv_u_;
          cap_ = cap.ldlt();
        }
        return true;
      }
      delta = delta == 0.0 ? 1e-12 * std::max(1.0, scale) : delta * 100.0;
    }
    return false;
  }

  Eigen::MatrixXd apply_inverse(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd y = llt_.solve(b);
    if (u_.cols() > 0) y -= s_inv_u_ * cap_.solve(u_.transpose() * y);
    return y;
  }

  /// Damped Newton on t f0 + phi restricted to the equality subspace.
  bool center(Eigen::VectorXd& x, double t, int& newton_used,
              const std::function<bool(const Eigen::VectorXd&)>& stop) {
    Eigen::VectorXd grad;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::MatrixXd u;
    Eigen::MatrixXd eq_dense_t;
    if (eq_.rows() > 0) eq_dense_t = Eigen::MatrixXd(eq_.transpose());
    double last_decrement = kInf;
    int stalls = 0;
    for (int it = 0; it < 200; ++it) {
      if (newton_used >= opt_.max_newton) return false;
      ++newton_used;
      assemble(x, t, grad, trip, u);
      if (!factorize(trip, u)) return false;
      Eigen::VectorXd dx;
      if (eq_.rows() > 0) {
        Eigen::MatrixXd rhs(p_.n, eq_.rows() + 1);
        rhs.leftCols(eq_.rows()) = eq_dense_t;
        rhs.col(eq_.rows()) = grad;
        const Eigen::MatrixXd sol = apply_inverse(rhs);
        const Eigen::MatrixXd y = sol.leftCols(eq_.rows());
        const Eigen::VectorXd hg = sol.col(eq_.rows());
        const Eigen::MatrixXd schur = eq_ * y;
        // The residual term pulls round-off drift back onto E x = f.
        const Eigen::VectorXd resid = eq_rhs_ - eq_ * x;
        const Eigen::VectorXd nu =
            schur.completeOrthogonalDecomposition().solve(-(eq_ * hg) - resid);
        dx = -hg - y * nu;
      } else {
        dx = -apply_inverse(grad);
      }
      const double decrement = -grad.dot(dx);
      if (!std::isfinite(decrement)) return false;
      if (decrement / 2 <= opt_.newton_tolerance) return true;
      // Round-off floor: a tiny decrement that no longer shrinks.
      stalls = decrement < 1e-6 && decrement > 0.25 * last_decrement ? stalls + 1 : 0;
      if (stalls >= 3) return true;
      last_decrement = decrement;

      double step = std::min(1.0, max_linear_step(x, dx));
      const double base = merit(x, t);
      bool accepted = false;
      for (int ls = 0; ls < 80; ++ls) {
        const Eigen::VectorXd trial = x + step * dx;
        const double m = merit(trial, t);
        if (std::isfinite(m) &&
            m <= base - 0.01 * step * decrement + 1e-13 * std::abs(base)) {
          x = trial;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // Round-off floor: the point is centered as well as it can be.
        return decrement < 1e-6;
      }
      if (stop && stop(x)) return true;
    }
    return false;
  }

  double max_linear_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) const {
    double step = kInf;
    for (int i = 0; i < p_.n; ++i) {
      if (dx[i] < 0 && std::isfinite(p_.lower[i])) {
        step = std::min(step, (x[i] - p_.lower[i]) / -dx[i]);
      }
      if (dx[i] > 0 && std::isfinite(p_.upper[i])) {
        step = std::min(step, (p_.upper[i] - x[i]) / dx[i]);
      }
    }
    for (const auto& r : p_.inequalities) {
      const double ad = r.dot(dx);
      if (ad > 0) step = std::min(step, (r.rhs - r.dot(x)) / ad);
    }
    return 0.99 * step;
  }

  const Program& p_;
  SolveOptions opt_;
  std::vector<Eigen::Triplet<double>> eq_triplets_;
  Eigen::SparseMatrix<double> eq_;
  Eigen::VectorXd eq_rhs_;
  int barrier_count_ = 0;
  Eigen::SparseMatrix<double> hess_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
  bool pattern_ready_ = false;
  Eigen::MatrixXd u_;
  Eigen::MatrixXd s_inv_u_;
  Eigen::LDLT<Eigen::MatrixXd> cap_;
  mutable std::vector<double> local_;
};

/// Least-squares projection of x onto {E x = f}; false if inconsistent.
inline bool project_equalities(const Program& p, Eigen::VectorXd& x) {
  if (p.equalities.empty()) return true;
  const int m = static_cast<int>(p.equalities.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, p.n);
  Eigen::VectorXd b(m);
  for (int r = 0; r < m; ++r) {
    const auto& row = p.equalities[r];
    for (std::size_t i = 0; i < row.index.size(); ++i) a(r, row.index[i]) += row.coef[i];
    b[r] = row.rhs;
  }
  const Eigen::VectorXd resid = a * x - b;
  const Eigen::VectorXd y = (a * a.transpose()).completeOrthogonalDecomposition().solve(resid);
  x -= a.transpose() * y;
  return (a * x - b).lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + b.lpNorm<Eigen::Infinity>());
}

/// Starting point inside the finite bounds.
inline Eigen::VectorXd default_start(const Program& p) {
  Eigen::VectorXd x(p.n);
  for (int i = 0; i < p.n; ++i) {
    const bool lo = std::isfinite(p.lower[i]);
    const bool hi = std::isfinite(p.upper[i]);
    if (lo && hi) x[i] = 0.5 * (p.lower[i] + p.upper[i]);
    else if (lo) x[i] = p.lower[i] + 1.0;
    else if (hi) x[i] = p.upper[i] - 1.0;
    else x[i] = 0.0;
  }
  return x;
}

/// Phase one: minimize s subject to every inequality relaxed by s.
/// best_slack receives the smallest uniform relaxation phase one reached
/// (+inf when the equalities are inconsistent or a constraint is undefined).
inline std::optional<Eigen::VectorXd> find_interior_point(const Program& p, Eigen::VectorXd x,
                                                          const SolveOptions& opt,
                                                          double* best_slack = nullptr) {
  if (best_slack) *best_slack = std::numeric_limits<double>::infinity();
  if (!project_equalities(p, x)) return std::nullopt;
  {
    BarrierSolver check(p, opt);
    if (check.strictly_feasible(x)) {
      if (best_slack) *best_slack = -1.0;
      return x;
    }
  }
  const int n = p.n;
  const int s = n;
  Program aux(n + 1);
  aux.linear_cost[s] = 1.0;
  aux.equalities = p.equalities;
  double worst = 0.0;
  for (const auto& r : p.inequalities) {
    auto row = r;
    row.index.push_back(s);
    row.coef.push_back(-1.0);
    aux.inequalities.push_back(std::move(row));
    worst = std::max(worst, r.dot(x) - r.rhs);
  }
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(p.lower[i])) {
      aux.add_inequality({i, s}, {-1.0, -1.0}, -p.lower[i]);
      worst = std::max(worst, p.lower[i] - x[i]);
    }
    if (std::isfinite(p.upper[i])) {
      aux.add_inequality({i, s}, {1.0, -1.0}, p.upper[i]);
      worst = std::max(worst, x[i] - p.upper[i]);
    }
  }
  std::vector<double> local;
  for (const auto& h : p.constraints) {
    SmoothFunction relaxed;
    relaxed.support = h.support;
    relaxed.support.push_back(s);
    const auto inner = h.eval;
    const int k = static_cast<int>(h.support.size());
    relaxed.eval = [inner, k](const double* xl, double* grad, std::vector<HessianEntry>* hess) {
      const double v = inner(xl, grad, hess);
      if (grad) grad[k] = -1.0;
      return v - xl[k];
    };
    local.resize(k);
    for (int i = 0; i < k; ++i) local[i] = x[h.support[i]];
    const double v = h.eval(local.data(), nullptr, nullptr);
    if (!std::isfinite(v)) return std::nullopt;
    worst = std::max(worst, v);
    aux.constraints.push_back(std::move(relaxed));
  }
  aux.set_bounds(s, -1.0, std::numeric_limits<double>::infinity());
  // Free variables get a wide box so the phase-one barrier stays bounded
  // below along recession directions of the feasible set.
  double reach = x.lpNorm<Eigen::Infinity>();
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(p.lower[i])) reach = std::max(reach, std::abs(p.lower[i]));
    if (std::isfinite(p.upper[i])) reach = std::max(reach, std::abs(p.upper[i]));
  }
  const double box = 1e4 * (1.0 + reach);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(p.lower[i])) aux.lower[i] = x[i] - box;
    if (!std::isfinite(p.upper[i])) aux.upper[i] = x[i] + box;
  }

  Eigen::VectorXd z(n + 1);
  z.head(n) = x;
  z[s] = worst + 1.0;

  SolveOptions aux_opt = opt;
  aux_opt.tolerance = 1e-9;
  // Start the barrier weight so that t * (s0 - lower bound) is of the order
  // of the barrier count; with t0 = 1 a grossly infeasible start takes
  // thousands of damped steps along the curved constraint valleys.
  aux_opt.t0 = std::min(opt.t0, BarrierSolver(aux, opt).barrier_count() / (z[s] + 1.0));
  BarrierSolver solver(aux, aux_opt);
  int used = 0;
  double t = 0.0;
  const double deep = 1e-3;
  solver.minimize(z, used, t, nullptr,
                  [s, deep](const Eigen::VectorXd& v) { return v[s] < -deep; });
  // The start itself may be closer to feasible than where phase one stalled.
  if (best_slack) *best_slack = std::min(z[s], worst);
  if (!(z[s] < -1e-10)) return std::nullopt;
  x = z.head(n);
  BarrierSolver check(p, opt);
  if (!check.strictly_feasible(x)) return std::nullopt;
  return x;
}

/// Copy of p with every inequality, smooth constraint and bound loosened by eps.
inline Program loosened(const Program& p, double eps) {
  Program q = p;
  for (auto& r : q.inequalities) r.rhs += eps;
  for (auto& h : q.constraints) {
    const auto inner = h.eval;
    h.eval = [inner, eps](const double* x, double* grad, std::vector<HessianEntry>* hess) {
      return inner(x, grad, hess) - eps;
    };
  }
  for (int i = 0; i < q.n; ++i) {
    q.lower[i] -= eps;
    q.upper[i] += eps;
  }
  return q;
}

}  // namespace detail

/// Solves the program from `start` (projected and, if needed, moved into the
/// strict interior first). When the feasible set has no interior but phase one
/// gets within opt.relax_limit of feasibility, the constraints are loosened by
/// a small amount and the loosened program is solved instead; the amount is
/// reported in SolveOutcome::relaxation. Status Infeasible otherwise.
inline SolveOutcome solve(const Program& p, const std::optional<Eigen::VectorXd>& start = {},
                          const SolveOptions& opt = {}) {
  SolveOutcome out;
  Eigen::VectorXd x0 = start ? *start : detail::default_start(p);
  double reached = 0.0;
  auto interior = detail::find_interior_point(p, x0, opt, &reached);
  const Program* target = &p;
  Program relaxed;
  if (!interior && reached <= opt.relax_limit) {
    out.relaxation = std::max(opt.relax_amount, 10.0 * std::max(0.0, reached));
    relaxed = detail::loosened(p, out.relaxation);
    interior = detail::find_interior_point(relaxed, x0, opt);
    target = &relaxed;
  }
  if (!interior) {
    out.status = SolveStatus::Infeasible;
    out.point = x0;
    out.relaxation = 0.0;
    return out;
  }
  Eigen::VectorXd x = *interior;
  detail::BarrierSolver solver(*target, opt);
  double t = opt.t0;
  out.status = solver.minimize(x, out.newton_iterations, t, &out.stage_objectives);
  out.point = x;
  out.objective_value = p.objective(x);
  out.kkt_residual = solver.kkt_residual(x, t);
  return out;
}

}  // namespace isac::convex
