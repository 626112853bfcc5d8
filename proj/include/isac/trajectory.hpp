#pragma once

// UAV trajectory block: rate tables along a path, the first-order rate
// surrogates, feasibility checks and one successive-convex-approximation
// round of the trajectory subproblem for a fixed association plan.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "isac/beamforming.hpp"
#include "isac/convex.hpp"
#include "isac/errors.hpp"
#include "isac/geometry.hpp"
#include "isac/scenario.hpp"
#include "isac/schedule.hpp"

namespace isac {

struct Trajectory {
  std::vector<GroundPoint> points;
  double altitude = 40.0;
  double v_max = 30.0;
  double slot_seconds = 0.25;
  std::optional<GroundPoint> start;
  std::optional<GroundPoint> finish;

  int slots() const { return static_cast<int>(points.size()); }
  UavPosition at(int n) const { return at_altitude(points[n], altitude); }
  double max_step() const { return v_max * slot_seconds; }
};

inline Trajectory make_trajectory(const Scenario& s, std::vector<GroundPoint> points) {
  Trajectory t;
  t.points = std::move(points);
  t.altitude = s.altitude;
  t.v_max = s.v_max;
  t.slot_seconds = s.frames.slot_seconds;
  t.start = s.start;
  t.finish = s.finish;
  return t;
}

/// Straight line from start to finish at constant speed; with free endpoints
/// the UAV waits at the centroid of users and targets.
inline Trajectory straight_line(const Scenario& s) {
  const int N = s.frames.n_total;
  std::vector<GroundPoint> pts(N);
  if (s.start && s.finish) {
    for (int n = 0; n < N; ++n) {
      const double t = N > 1 ? static_cast<double>(n) / (N - 1) : 0.0;
      pts[n] = {s.start->x + t * (s.finish->x - s.start->x),
                s.start->y + t * (s.finish->y - s.start->y)};
    }
  } else {
    GroundPoint c{0.0, 0.0};
    int count = 0;
    for (const auto* group : {&s.users, &s.targets}) {
      for (const auto& p : *group) {
        c.x += p.x;
        c.y += p.y;
        ++count;
      }
    }
    c.x /= count;
    c.y /= count;
    std::fill(pts.begin(), pts.end(), c);
  }
  return make_trajectory(s, std::move(pts));
}

/// Communication rates, sensing lower-bound rates and gain margins along a
/// trajectory.
inline RateTable compute_rates(const Trajectory& t, const Scenario& s) {
  const int K = s.user_count();
  const int J = s.target_count();
  const int N = t.slots();
  RateTable r;
  r.comm.resize(K, N);
  r.margin.resize(J, N);
  r.isac_lb.assign(J, Eigen::MatrixXd(K, N));
  const double g0 = s.radio.gamma0();
  for (int n = 0; n < N; ++n) {
    const UavPosition q = t.at(n);
    for (int k = 0; k < K; ++k) r.comm(k, n) = comm_rate(q, s.users[k], s.radio, s.array);
    for (int j = 0; j < J; ++j) {
      const double m = gain_margin(q, s.targets[j], s.radio, s.array);
      r.margin(j, n) = m;
      for (int k = 0; k < K; ++k) {
        r.isac_lb[j](k, n) = std::log2(1.0 + g0 * std::max(0.0, m) / distance_sq(q, s.users[k]));
      }
    }
  }
  return r;
}

/// Tangent of log2(1 + a / z) at z_ref: a global under-estimator, since the
/// rate is convex in the squared distance z.
inline double surrogate_comm_rate(double z_c, double z_ref, double a) {
  return std::log2(1.0 + a / z_ref) - a * (z_c - z_ref) / ((z_ref * z_ref + a * z_ref) * std::log(2.0));
}

/// log2(1 + gamma0 (M P_max - z_r^{p/2} Gamma_th) / z_c) over squared distances.
inline double tilde_isac_rate(double z_c, double z_r, const RadioParams& r,
                              const ArrayGeometry& g) {
  const double dp = r.pathloss_exponent_sensing == 4 ? z_r * z_r : z_r;
  const double x = r.gamma0() * (g.antenna_count() * r.p_max - dp * r.gamma_th);
  if (!(z_c > 0) || !(z_c + x > 0)) throw std::domain_error("rate argument outside the log domain");
  return std::log2(1.0 + x / z_c);
}

/// Analytic Hessian of tilde_isac_rate in (z_c, z_r).
inline std::array<std::array<double, 2>, 2> tilde_isac_hessian(double z_c, double z_r,
                                                               const RadioParams& r,
                                                               const ArrayGeometry& g) {
  // f = [ln A - ln z_c] / ln 2 with A = z_c + gamma0 (M P - Gamma z_r^{p/2}).
  const bool quartic = r.pathloss_exponent_sensing == 4;
  const double g0 = r.gamma0();
  const double a = z_c + g0 * (g.antenna_count() * r.p_max - (quartic ? z_r * z_r : z_r) * r.gamma_th);
  const double a_r = -g0 * r.gamma_th * (quartic ? 2 * z_r : 1.0);
  const double a_rr = quartic ? -2 * g0 * r.gamma_th : 0.0;
  const double ln2 = std::log(2.0);
  std::array<std::array<double, 2>, 2> h{};
  h[0][0] = (-1.0 / (a * a) + 1.0 / (z_c * z_c)) / ln2;
  h[0][1] = h[1][0] = -a_r / (a * a) / ln2;
  h[1][1] = (a_rr / a - a_r * a_r / (a * a)) / ln2;
  return h;
}

/// Jointly concave minorant of tilde_isac_rate that is tight at z_c = z_ref:
/// log2(z_c + X(z_r)) minus the tangent of log2(z_c) at z_ref.
inline double isac_rate_minorant(double z_c, double z_r, double z_ref, const RadioParams& r,
                                 const ArrayGeometry& g) {
  const double dp = r.pathloss_exponent_sensing == 4 ? z_r * z_r : z_r;
  const double a = z_c + r.gamma0() * (g.antenna_count() * r.p_max - dp * r.gamma_th);
  if (!(a > 0)) return -std::numeric_limits<double>::infinity();
  return std::log2(a) - std::log2(z_ref) - (z_c - z_ref) / (z_ref * std::log(2.0));
}

namespace traj_rules {
inline constexpr const char* kSpeed = "speed limit exceeded";
inline constexpr const char* kStart = "start location not met";
inline constexpr const char* kFinish = "finish location not met";
inline constexpr const char* kReach = "sensed target out of beam-gain reach";
inline constexpr const char* kQos = "frame QoS below floor";
inline constexpr const char* kArea = "outside the flight area";
}  // namespace traj_rules

/// Relative slack granted to the speed and endpoint checks (solver output is
/// accurate to roughly 1e-9 of the step length).
inline constexpr double kPathTolerance = 1e-6;

/// Speed, endpoint, beam-gain reach and per-frame QoS violations of a plan
/// flown along a trajectory. Slot indices are 0-based; QoS entries carry the
/// frame index.
inline std::vector<Violation> check_trajectory_feasibility(const Trajectory& t, const Plan& p,
                                                           const Scenario& s) {
  std::vector<Violation> out;
  const double step = t.max_step();
  const double tol = kPathTolerance * std::max(step, 1.0);
  for (int n = 1; n < t.slots(); ++n) {
    const double d = horizontal_distance(t.points[n], t.points[n - 1]);
    if (d > step + tol) out.push_back({traj_rules::kSpeed, n, -1, d - step});
  }
  for (int n = 0; n < t.slots(); ++n) {
    if (!s.area.contains(t.points[n])) out.push_back({traj_rules::kArea, n, -1, 0.0});
  }
  if (t.start && t.slots() > 0) {
    const double d = horizontal_distance(t.points.front(), *t.start);
    if (d > tol) out.push_back({traj_rules::kStart, 0, -1, d});
  }
  if (t.finish && t.slots() > 0) {
    const double d = horizontal_distance(t.points.back(), *t.finish);
    if (d > tol) out.push_back({traj_rules::kFinish, t.slots() - 1, -1, d});
  }
  const double mp = s.antenna_power();
  for (int n = 0; n < std::min(t.slots(), p.slots); ++n) {
    for (int j = 0; j < p.targets; ++j) {
      if (p.sensing(j, n) <= 0) continue;
      const double m = gain_margin(t.at(n), s.targets[j], s.radio, s.array);
      if (m < -detail::kBranchTolerance * mp) out.push_back({traj_rules::kReach, n, j, -m});
    }
  }
  bool any_qos = false;
  for (double r : s.qos) any_qos = any_qos || r > 0;
  if (any_qos && t.slots() == p.slots) {
    const RateTable rates = compute_rates(t, s);
    for (int l = 0; l < s.frames.frames(); ++l) {
      for (int k = 0; k < p.users; ++k) {
        const double got = frame_rate(p, rates, s.frames, k, l);
        if (got < s.qos[k] - 1e-9) out.push_back({traj_rules::kQos, l, k, s.qos[k] - got});
      }
    }
  }
  return out;
}

/// Mean lower-bound rate of a plan flown along a trajectory.
inline double plan_objective(const Trajectory& t, const Plan& p, const Scenario& s) {
  return mean_plan_rate(p, compute_rates(t, s));
}

namespace detail {

/// Largest squared UAV-target distance at which the gain threshold holds.
inline double sensing_distance_sq_limit(const Scenario& s) {
  const double ratio = s.antenna_power() / s.radio.gamma_th;
  return s.radio.pathloss_exponent_sensing == 4 ? std::sqrt(ratio) : ratio;
}

/// (x - px)^2 + (y - py)^2 + h2 - scale * z <= 0 over support {x, y, z}
/// (z omitted when scale is 0).
inline convex::SmoothFunction disc_constraint(int ix, int iy, int iz, GroundPoint c, double h2,
                                              double rhs) {
  convex::SmoothFunction f;
  f.support = {ix, iy};
  if (iz >= 0) f.support.push_back(iz);
  const bool with_z = iz >= 0;
  f.eval = [c, h2, rhs, with_z](const double* x, double* grad,
                                std::vector<convex::HessianEntry>* hess) {
    const double dx = x[0] - c.x;
    const double dy = x[1] - c.y;
    if (grad) {
      grad[0] = 2 * dx;
      grad[1] = 2 * dy;
      if (with_z) grad[2] = -1.0;
    }
    if (hess) {
      hess->push_back({0, 0, 2.0});
      hess->push_back({1, 1, 2.0});
    }
    return dx * dx + dy * dy + h2 - rhs - (with_z ? x[2] : 0.0);
  };
  return f;
}

/// ||q_a - q_b||^2 <= limit^2.
inline convex::SmoothFunction step_constraint(int ax, int ay, int bx, int by, double limit) {
  convex::SmoothFunction f;
  f.support = {ax, ay, bx, by};
  const double l2 = limit * limit;
  f.eval = [l2](const double* x, double* grad, std::vector<convex::HessianEntry>* hess) {
    const double dx = x[0] - x[2];
    const double dy = x[1] - x[3];
    if (grad) {
      grad[0] = 2 * dx;
      grad[1] = 2 * dy;
      grad[2] = -2 * dx;
      grad[3] = -2 * dy;
    }
    if (hess) {
      for (int c = 0; c < 2; ++c) {
        hess->push_back({c, c, 2.0});
        hess->push_back({c + 2, c + 2, 2.0});
        hess->push_back({c, c + 2, -2.0});
        hess->push_back({c + 2, c, -2.0});
      }
    }
    return dx * dx + dy * dy - l2;
  };
  return f;
}

/// One weighted sensing-rate minorant term w * m(z_c, z_r) in the local
/// coordinates (z_c, z_r): value, gradient and Hessian. Returns -inf outside
/// the log domain.
struct MinorantTerm {
  int zc;
  int zr;
  double weight;
  double z_ref;
};

inline double minorant_eval(const MinorantTerm& t, const double* zc, const double* zr,
                            double gamma0, double mp, double gth, bool quartic, double* g_c,
                            double* g_r, double* h_cc, double* h_cr, double* h_rr) {
  const double ln2 = std::log(2.0);
  const double a = *zc + gamma0 * (mp - (quartic ? *zr * *zr : *zr) * gth);
  if (!(a > 0)) return -std::numeric_limits<double>::infinity();
  const double a_r = -gamma0 * gth * (quartic ? 2 * *zr : 1.0);
  const double a_rr = quartic ? -2 * gamma0 * gth : 0.0;
  const double w = t.weight;
  if (g_c) {
    *g_c = w * (1.0 / a - 1.0 / t.z_ref) / ln2;
    *g_r = w * a_r / (a * ln2);
  }
  if (h_cc) {
    *h_cc = -w / (a * a * ln2);
    *h_cr = -w * a_r / (a * a * ln2);
    *h_rr = w * (a_rr / a - a_r * a_r / (a * a)) / ln2;
  }
  return w * (std::log2(a) - std::log2(t.z_ref) - (*zc - t.z_ref) / (t.z_ref * ln2));
}

/// Pulls sensing slots back inside the gain reach and pins the endpoints,
/// undoing the tiny loosening the convex solver may apply.
inline void settle(Trajectory& t, const Plan& p, const Scenario& s) {
  if (t.start) t.points.front() = *t.start;
  if (t.finish) t.points.back() = *t.finish;
  if (!(s.radio.gamma_th > 0)) return;
  const double reach_sq = sensing_distance_sq_limit(s) - s.altitude * s.altitude;
  if (!(reach_sq > 0)) return;
  const double reach = std::sqrt(reach_sq) * (1.0 - 1e-12);
  for (int n = 0; n < t.slots(); ++n) {
    for (int j = 0; j < p.targets; ++j) {
      if (p.sensing(j, n) <= 0) continue;
      const GroundPoint v = s.targets[j];
      const double d = horizontal_distance(t.points[n], v);
      if (d > reach) {
        t.points[n] = {v.x + (t.points[n].x - v.x) * reach / d,
                       v.y + (t.points[n].y - v.y) * reach / d};
      }
    }
  }
}

}  // namespace detail

/// Surrogate built around `reference`, evaluated on `at` with tight slacks.
inline double surrogate_objective(const Trajectory& reference, const Trajectory& at,
                                  const Plan& p, const Scenario& s) {
  const bool sensing_cost = s.radio.gamma_th > 0;
  const double a = s.radio.gamma0() * s.antenna_power();
  double total = 0.0;
  for (int n = 0; n < p.slots; ++n) {
    for (int k = 0; k < p.users; ++k) {
      if (!(p.alpha(k, n) > 0)) continue;
      const double z_ref = distance_sq(reference.at(n), s.users[k]);
      const double z_c = distance_sq(at.at(n), s.users[k]);
      double comm_w = p.alpha(k, n);
      for (int j = 0; sensing_cost && j < p.targets; ++j) {
        const double e = p.e[j](k, n);
        if (e <= 0) continue;
        comm_w -= e;
        total += e * isac_rate_minorant(z_c, distance_sq(at.at(n), s.targets[j]), z_ref, s.radio,
                                        s.array);
      }
      total += std::max(0.0, comm_w) * surrogate_comm_rate(z_c, z_ref, a);
    }
  }
  return total / p.slots;
}

struct TrajectoryStep {
  Trajectory trajectory;
  double surrogate = 0.0;   // optimal surrogate objective (mean rate units)
  double relaxation = 0.0;  // constraint loosening used by the convex solver
};

/// One SCA round of the trajectory subproblem for a fixed (possibly relaxed)
/// plan. Maximizes the surrogate
///   (1/N) sum_{k,n} [(alpha - sum_j e) Rc_hat(z_c) + sum_j e m_j(z_c, z_r)]
/// over q and slack squared distances z_c >= d(q,u)^2, z_r >= d(q,v)^2 with
/// the speed, endpoint, beam-gain reach, per-frame QoS and trust-region
/// constraints. The surrogate lower-bounds the true objective and is tight at
/// the input, so the true objective does not decrease.
inline TrajectoryStep solve_trajectory_subproblem(const Trajectory& t, const Plan& p,
                                                  const Scenario& s, double trust) {
  const int N = t.slots();
  const int K = p.users;
  const int J = p.targets;
  TrajectoryStep res{t, plan_objective(t, p, s), 0.0};
  if (t.v_max == 0.0 && N > 1) return res;  // only the input path is admissible

  const double h2 = s.altitude * s.altitude;
  const double g0 = s.radio.gamma0();
  const double mp = s.antenna_power();
  const double a_comm = g0 * mp;
  const bool sensing_cost = s.radio.gamma_th > 0;
  const bool quartic = s.radio.pathloss_exponent_sensing == 4;
  const double zr_max = sensing_cost ? detail::sensing_distance_sq_limit(s) : 0.0;

  // Variable layout: q (2N), then z_c for served pairs, then z_r for sensed
  // (target, slot) pairs.
  int nv = 2 * N;
  std::vector<int> zc(K * N, -1);
  std::vector<int> zr(J * N, -1);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      if (p.alpha(k, n) > 0) zc[k * N + n] = nv++;
    }
  }
  if (sensing_cost) {
    for (int n = 0; n < N; ++n) {
      for (int j = 0; j < J; ++j) {
        if (p.sensing(j, n) > 0) zr[j * N + n] = nv++;
      }
    }
  }

  convex::Program prog(nv);
  Eigen::VectorXd x0(nv);
  for (int n = 0; n < N; ++n) {
    x0[2 * n] = t.points[n].x;
    x0[2 * n + 1] = t.points[n].y;
    prog.set_bounds(2 * n, s.area.x_min, s.area.x_max);
    prog.set_bounds(2 * n + 1, s.area.y_min, s.area.y_max);
  }

  std::vector<double> zref(K * N, 0.0);
  // Linear coefficient on z_c of each (k, n) cost and QoS term, and the
  // constant of the linearized communication rate.
  std::vector<double> comm_slope(K * N, 0.0);
  std::vector<double> comm_const(K * N, 0.0);
  std::vector<detail::MinorantTerm> minorants;
  std::vector<std::vector<int>> minorants_of(K * N);
  const double ln2 = std::log(2.0);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const int id = zc[k * N + n];
      if (id < 0) continue;
      const double z = distance_sq(t.at(n), s.users[k]);
      zref[k * N + n] = z;
      x0[id] = z * (1 + 1e-9) + 1e-9;
      prog.set_bounds(id, h2, std::numeric_limits<double>::infinity());
      double comm_w = p.alpha(k, n);
      for (int j = 0; j < J; ++j) {
        const double e = p.e[j](k, n);
        if (e <= 0) continue;
        if (!sensing_cost) continue;  // without a threshold the sensing rate is the comm rate
        comm_w -= e;
        minorants_of[k * N + n].push_back(static_cast<int>(minorants.size()));
        minorants.push_back({id, zr[j * N + n], e, z});
      }
      comm_w = std::max(0.0, comm_w);
      // Rc_hat(z) = c0 - slope * z.
      const double slope = a_comm / ((z * z + a_comm * z) * ln2);
      comm_slope[k * N + n] = comm_w * slope;
      comm_const[k * N + n] = comm_w * (std::log2(1.0 + a_comm / z) + slope * z);
    }
  }
  for (int n = 0; n < N; ++n) {
    for (int j = 0; j < J; ++j) {
      const int id = zr[j * N + n];
      if (id < 0) continue;
      const double z = distance_sq(t.at(n), s.targets[j]);
      x0[id] = std::min(z * (1 + 1e-9) + 1e-9, zr_max);
      prog.set_bounds(id, h2, zr_max);
    }
  }

  // Objective: minimize the negated surrogate (scaled by N for conditioning).
  for (int i = 0; i < K * N; ++i) {
    if (zc[i] >= 0) prog.linear_cost[zc[i]] += comm_slope[i];
  }
  for (const auto& m : minorants) {
    convex::SmoothFunction f;
    f.support = {m.zc, m.zr};
    f.eval = [m, g0, mp, gth = s.radio.gamma_th, quartic](
                 const double* x, double* grad, std::vector<convex::HessianEntry>* hess) {
      double gc, gr, hcc, hcr, hrr;
      const double v = detail::minorant_eval(m, &x[0], &x[1], g0, mp, gth, quartic,
                                             grad ? &gc : nullptr, grad ? &gr : nullptr,
                                             hess ? &hcc : nullptr, hess ? &hcr : nullptr,
                                             hess ? &hrr : nullptr);
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
      if (grad) {
        grad[0] = -gc;
        grad[1] = -gr;
      }
      if (hess) {
        hess->push_back({0, 0, -hcc});
        hess->push_back({0, 1, -hcr});
        hess->push_back({1, 0, -hcr});
        hess->push_back({1, 1, -hrr});
      }
      return -v;
    };
    prog.cost_terms.push_back(std::move(f));
  }

  // Slack distances.
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      if (zc[k * N + n] >= 0) {
        prog.constraints.push_back(
            detail::disc_constraint(2 * n, 2 * n + 1, zc[k * N + n], s.users[k], h2, 0.0));
      }
    }
    for (int j = 0; j < J; ++j) {
      if (zr[j * N + n] >= 0) {
        prog.constraints.push_back(
            detail::disc_constraint(2 * n, 2 * n + 1, zr[j * N + n], s.targets[j], h2, 0.0));
      }
    }
  }
  // Without a gain threshold the reach constraint is vacuous; otherwise it is
  // carried by the z_r upper bound.

  for (int n = 1; n < N; ++n) {
    prog.constraints.push_back(
        detail::step_constraint(2 * n, 2 * n + 1, 2 * (n - 1), 2 * (n - 1) + 1, t.max_step()));
  }
  if (t.start) {
    prog.add_equality({0}, {1.0}, t.start->x);
    prog.add_equality({1}, {1.0}, t.start->y);
  }
  if (t.finish) {
    prog.add_equality({2 * (N - 1)}, {1.0}, t.finish->x);
    prog.add_equality({2 * (N - 1) + 1}, {1.0}, t.finish->y);
  }
  for (int n = 0; n < N; ++n) {
    prog.constraints.push_back(
        detail::disc_constraint(2 * n, 2 * n + 1, -1, t.points[n], 0.0, trust * trust));
  }

  // Per-frame QoS on the surrogate rates.
  const FramePlan& f = s.frames;
  for (int l = 0; l < f.frames(); ++l) {
    for (int k = 0; k < K; ++k) {
      if (!(s.qos[k] > 0)) continue;
      std::vector<int> support;
      std::vector<double> lin;
      double constant = s.qos[k] * f.n_per_frame;
      std::vector<detail::MinorantTerm> local_terms;
      std::vector<int> where;  // position of (z_c, z_r) of each term in support
      auto slot_of = [&](int var) {
        const auto it = std::find(support.begin(), support.end(), var);
        if (it != support.end()) return static_cast<int>(it - support.begin());
        support.push_back(var);
        lin.push_back(0.0);
        return static_cast<int>(support.size()) - 1;
      };
      for (int n = f.frame_begin(l); n < f.frame_begin(l + 1); ++n) {
        const int i = k * N + n;
        if (zc[i] < 0) continue;
        const int pc = slot_of(zc[i]);
        lin[pc] += comm_slope[i];
        constant -= comm_const[i];
        for (int mi : minorants_of[i]) {
          auto m = minorants[mi];
          const int pr = slot_of(m.zr);
          m.zc = pc;
          m.zr = pr;
          local_terms.push_back(m);
        }
      }
      if (support.empty()) {
        throw SubproblemInfeasible("user " + std::to_string(k) + " is never served in frame " +
                                   std::to_string(l));
      }
      convex::SmoothFunction qf;
      qf.support = support;
      const int width = static_cast<int>(support.size());
      qf.eval = [lin, constant, local_terms, width, g0, mp, gth = s.radio.gamma_th, quartic](
                    const double* x, double* grad, std::vector<convex::HessianEntry>* hess) {
        // constant + sum lin*z - sum minorants <= 0.
        double v = constant;
        for (int i = 0; i < width; ++i) v += lin[i] * x[i];
        if (grad) {
          for (int i = 0; i < width; ++i) grad[i] = lin[i];
        }
        for (const auto& m : local_terms) {
          double gc, gr, hcc, hcr, hrr;
          const double mv = detail::minorant_eval(m, &x[m.zc], &x[m.zr], g0, mp, gth, quartic,
                                                  grad ? &gc : nullptr, grad ? &gr : nullptr,
                                                  hess ? &hcc : nullptr, hess ? &hcr : nullptr,
                                                  hess ? &hrr : nullptr);
          if (!std::isfinite(mv)) return std::numeric_limits<double>::infinity();
          v -= mv;
          if (grad) {
            grad[m.zc] -= gc;
            grad[m.zr] -= gr;
          }
          if (hess) {
            hess->push_back({m.zc, m.zc, -hcc});
            hess->push_back({m.zc, m.zr, -hcr});
            hess->push_back({m.zr, m.zc, -hcr});
            hess->push_back({m.zr, m.zr, -hrr});
          }
        }
        return v;
      };
      prog.constraints.push_back(std::move(qf));
    }
  }

  const auto out = convex::solve(prog, x0);
  if (out.status == convex::SolveStatus::Infeasible) {
    throw SubproblemInfeasible("trajectory subproblem infeasible (speed, endpoints or reach)");
  }
  if (out.status != convex::SolveStatus::Optimal && prog.max_violation(out.point) > 1e-6) {
    throw NonConvergence("trajectory subproblem did not converge");
  }
  for (int n = 0; n < N; ++n) res.trajectory.points[n] = {out.point[2 * n], out.point[2 * n + 1]};
  detail::settle(res.trajectory, p, s);
  double constant = 0.0;
  for (double c : comm_const) constant += c;
  res.surrogate = (constant - out.objective_value) / N;
  res.relaxation = out.relaxation;
  return res;
}

/// Path close to `base` that puts every target within sensing reach at a
/// designated slot of each frame. `order` permutes which target is visited
/// first inside a frame. Returns nullopt when no such path exists.
inline std::optional<Trajectory> seek_sensing_reach(const Trajectory& base, const Scenario& s,
                                                    const std::vector<int>& order,
                                                    double shrink = 0.98) {
  const int N = base.slots();
  const int J = s.target_count();
  if (J == 0 || !(s.radio.gamma_th > 0)) return base;
  const double reach_sq = detail::sensing_distance_sq_limit(s) - s.altitude * s.altitude;
  if (!(reach_sq > 0)) return std::nullopt;
  convex::Program prog(2 * N);
  Eigen::VectorXd x0(2 * N);
  for (int n = 0; n < N; ++n) {
    x0[2 * n] = base.points[n].x;
    x0[2 * n + 1] = base.points[n].y;
    prog.linear_cost[2 * n] = -2 * base.points[n].x;
    prog.linear_cost[2 * n + 1] = -2 * base.points[n].y;
    prog.quadratic_cost[2 * n] = 2.0;
    prog.quadratic_cost[2 * n + 1] = 2.0;
    prog.set_bounds(2 * n, s.area.x_min, s.area.x_max);
    prog.set_bounds(2 * n + 1, s.area.y_min, s.area.y_max);
  }
  for (int n = 1; n < N; ++n) {
    prog.constraints.push_back(
        detail::step_constraint(2 * n, 2 * n + 1, 2 * (n - 1), 2 * (n - 1) + 1, base.max_step()));
  }
  if (base.start) {
    prog.add_equality({0}, {1.0}, base.start->x);
    prog.add_equality({1}, {1.0}, base.start->y);
  }
  if (base.finish) {
    prog.add_equality({2 * (N - 1)}, {1.0}, base.finish->x);
    prog.add_equality({2 * (N - 1) + 1}, {1.0}, base.finish->y);
  }
  const int NL = s.frames.n_per_frame;
  if (NL < J) return std::nullopt;
  for (int l = 0; l < s.frames.frames(); ++l) {
    for (int i = 0; i < J; ++i) {
      const int n = s.frames.frame_begin(l) +
                    std::min(NL - 1, static_cast<int>(std::floor((i + 0.5) * NL / J)));
      prog.constraints.push_back(detail::disc_constraint(2 * n, 2 * n + 1, -1,
                                                         s.targets[order[i]], 0.0,
                                                         shrink * reach_sq));
    }
  }
  const auto out = convex::solve(prog, x0);
  if (out.status == convex::SolveStatus::Infeasible) return std::nullopt;
  Trajectory t = base;
  for (int n = 0; n < N; ++n) t.points[n] = {out.point[2 * n], out.point[2 * n + 1]};
  if (t.start) t.points.front() = *t.start;
  if (t.finish) t.points.back() = *t.finish;
  return t;
}

}  // namespace isac
