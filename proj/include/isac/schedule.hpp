#pragma once

// User association and periodic sensing selection: plan data model,
// feasibility checks, penalty terms, the relaxed association program and
// binary recovery.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isac/convex.hpp"
#include "isac/errors.hpp"

namespace isac {

/// Slot/frame bookkeeping. Frame l covers slots [l * N_L, (l + 1) * N_L).
struct FramePlan {
  int n_total = 0;
  int n_per_frame = 0;
  double slot_seconds = 0.25;

  int frames() const { return n_per_frame > 0 ? n_total / n_per_frame : 0; }
  int frame_of(int n) const { return n / n_per_frame; }
  int frame_begin(int l) const { return l * n_per_frame; }
  double horizon_seconds() const { return n_total * slot_seconds; }

  void validate() const {
    if (n_total < 1 || n_per_frame < 1) throw ValidationError("slot counts must be >= 1");
    if (n_total % n_per_frame != 0) {
      throw ValidationError("frame count T / T_L must be an integer");
    }
    if (!(slot_seconds > 0)) throw ValidationError("slot duration must be > 0");
  }
};

struct PenaltyConfig {
  double eta0 = 1e4;
  double scale_z = 0.7;
  double xi = 1e-3;         // outer stop: largest binary residual
  double eps_inner = 1e-4;  // inner stop: change of the penalized objective
  int max_outer = 60;
  int max_inner = 50;
  int restarts = 3;
  double trust_radius = 50.0;  // meters per SCA round

  void validate() const {
    if (!(eta0 > 0) || !(xi > 0) || !(eps_inner > 0)) {
      throw ValidationError("penalty parameters must be positive");
    }
    if (!(scale_z > 0 && scale_z < 1)) throw ValidationError("scale_z must lie in (0, 1)");
    if (max_outer < 1 || max_inner < 1 || restarts < 1) {
      throw ValidationError("iteration caps must be >= 1");
    }
    if (!(trust_radius > 0)) throw ValidationError("trust radius must be > 0");
  }
};

/// Relaxed or binary association/sensing plan. e[j](k, n) pairs user k with
/// target j in slot n; the *_bar members are the penalty slack copies.
struct Plan {
  int users = 0;
  int targets = 0;
  int slots = 0;
  Eigen::MatrixXd alpha;
  Eigen::MatrixXd alpha_bar;
  std::vector<Eigen::MatrixXd> e;
  std::vector<Eigen::MatrixXd> e_bar;

  Plan() = default;
  Plan(int k, int j, int n)
      : users(k),
        targets(j),
        slots(n),
        alpha(Eigen::MatrixXd::Zero(k, n)),
        alpha_bar(Eigen::MatrixXd::Zero(k, n)),
        e(j, Eigen::MatrixXd::Zero(k, n)),
        e_bar(j, Eigen::MatrixXd::Zero(k, n)) {}

  /// c_j[n] = sum_k e_kj[n].
  double sensing(int j, int n) const { return e[j].col(n).sum(); }

  /// sum_j e_kj[n].
  double sensing_weight(int k, int n) const {
    double s = 0.0;
    for (int j = 0; j < targets; ++j) s += e[j](k, n);
    return s;
  }

  /// Served user of a binary plan, -1 when idle.
  int served_user(int n) const {
    for (int k = 0; k < users; ++k) {
      if (alpha(k, n) > 0.5) return k;
    }
    return -1;
  }

  /// Sensed target of a binary plan, -1 for a communication-only slot.
  int sensed_target(int n) const {
    for (int j = 0; j < targets; ++j) {
      if (sensing(j, n) > 0.5) return j;
    }
    return -1;
  }
};

/// Per-slot rates and gain margins along a trajectory. isac_lb[j](k, n) is
/// the sensing-slot lower-bound rate, evaluated with the margin clamped at 0
/// where target j is out of reach.
struct RateTable {
  Eigen::MatrixXd comm;                 // K x N
  std::vector<Eigen::MatrixXd> isac_lb; // J of K x N
  Eigen::MatrixXd margin;               // J x N, M P_max - d^p Gamma_th
};

struct Violation {
  std::string rule;
  int slot = -1;     // slot or frame index, depending on the rule
  int subject = -1;  // user or target index
  double amount = 0.0;

  std::string describe() const {
    return rule + " at index " + std::to_string(slot) +
           (subject >= 0 ? " (subject " + std::to_string(subject) + ")" : "") +
           ", excess " + std::to_string(amount);
  }
};

namespace plan_rules {
inline constexpr const char* kOneUser = "at most one user per slot";
inline constexpr const char* kSenseNeedsService = "sensing requires serving the paired user";
inline constexpr const char* kOncePerFrame = "each target sensed once per frame";
inline constexpr const char* kOneTarget = "at most one target per slot";
inline constexpr const char* kBox = "value outside [0, 1]";
inline constexpr const char* kBinary = "value not binary";
}  // namespace plan_rules

inline std::vector<Violation> validate_plan(const Plan& p, const FramePlan& f, bool binary,
                                            double tol = 1e-9) {
  std::vector<Violation> out;
  auto check_value = [&](double v, int n, int subject) {
    if (v < -tol || v > 1 + tol) out.push_back({plan_rules::kBox, n, subject, v});
    if (binary && std::min(std::abs(v), std::abs(v - 1)) > tol) {
      out.push_back({plan_rules::kBinary, n, subject, v});
    }
  };
  for (int n = 0; n < p.slots; ++n) {
    double served = 0.0;
    double sensed = 0.0;
    for (int k = 0; k < p.users; ++k) {
      check_value(p.alpha(k, n), n, k);
      served += p.alpha(k, n);
      for (int j = 0; j < p.targets; ++j) {
        check_value(p.e[j](k, n), n, j);
        sensed += p.e[j](k, n);
        if (p.e[j](k, n) > p.alpha(k, n) + tol) {
          out.push_back({plan_rules::kSenseNeedsService, n, k, p.e[j](k, n) - p.alpha(k, n)});
        }
      }
    }
    if (served > 1 + tol) out.push_back({plan_rules::kOneUser, n, -1, served - 1});
    if (sensed > 1 + tol) out.push_back({plan_rules::kOneTarget, n, -1, sensed - 1});
  }
  for (int l = 0; l < f.frames(); ++l) {
    for (int j = 0; j < p.targets; ++j) {
      double total = 0.0;
      for (int n = f.frame_begin(l); n < f.frame_begin(l + 1); ++n) total += p.sensing(j, n);
      if (std::abs(total - 1) > tol * f.n_per_frame) {
        out.push_back({plan_rules::kOncePerFrame, l, j, total - 1});
      }
    }
  }
  return out;
}

/// Closed-form minimizer of the penalty terms over the slack copies.
inline double slack_value(double x) { return (x + x * x) / (1 + x * x); }

inline Plan slack_update(Plan p) {
  p.alpha_bar = p.alpha.unaryExpr(&slack_value);
  for (int j = 0; j < p.targets; ++j) p.e_bar[j] = p.e[j].unaryExpr(&slack_value);
  return p;
}

/// Lower-bound rate of user k in slot n, linear in alpha and e.
inline double plan_rate(const Plan& p, const RateTable& r, int k, int n) {
  double v = p.alpha(k, n) * r.comm(k, n);
  for (int j = 0; j < p.targets; ++j) {
    v += p.e[j](k, n) * (r.isac_lb[j](k, n) - r.comm(k, n));
  }
  return v;
}

/// Mean over slots of the summed lower-bound rates.
inline double mean_plan_rate(const Plan& p, const RateTable& r) {
  double s = 0.0;
  for (int n = 0; n < p.slots; ++n) {
    for (int k = 0; k < p.users; ++k) s += plan_rate(p, r, k, n);
  }
  return s / p.slots;
}

/// Average lower-bound rate of user k over frame l.
inline double frame_rate(const Plan& p, const RateTable& r, const FramePlan& f, int k, int l) {
  double s = 0.0;
  for (int n = f.frame_begin(l); n < f.frame_begin(l + 1); ++n) s += plan_rate(p, r, k, n);
  return s / f.n_per_frame;
}

inline double penalty_pair(double x, double xb) {
  const double a = x * (1 - xb);
  const double b = x - xb;
  return a * a + b * b;
}

/// Sum of the binary-forcing penalty terms (without the 1 / 2 eta weight).
inline double penalty_terms(const Plan& p) {
  double s = 0.0;
  for (int n = 0; n < p.slots; ++n) {
    for (int k = 0; k < p.users; ++k) {
      s += penalty_pair(p.alpha(k, n), p.alpha_bar(k, n));
      for (int j = 0; j < p.targets; ++j) s += penalty_pair(p.e[j](k, n), p.e_bar[j](k, n));
    }
  }
  return s;
}

/// Penalized objective: mean lower-bound rate minus (1 / 2 eta) penalties.
inline double penalty_objective(const Plan& p, const RateTable& r, double eta) {
  return mean_plan_rate(p, r) - penalty_terms(p) / (2 * eta);
}

/// Largest residual of x (1 - x_bar) = 0 and x = x_bar over all entries.
inline double binary_violation(const Plan& p) {
  double worst = 0.0;
  auto upd = [&](double x, double xb) {
    worst = std::max({worst, std::abs(x * (1 - xb)), std::abs(x - xb)});
  };
  for (int n = 0; n < p.slots; ++n) {
    for (int k = 0; k < p.users; ++k) {
      upd(p.alpha(k, n), p.alpha_bar(k, n));
      for (int j = 0; j < p.targets; ++j) upd(p.e[j](k, n), p.e_bar[j](k, n));
    }
  }
  return worst;
}

/// Entries below this are treated as exactly zero after a relaxed solve.
inline constexpr double kActivityFloor = 1e-6;

/// Relaxed association/sensing program for a fixed trajectory: maximizes the
/// penalized objective over alpha, e with slack copies held fixed. Sensing
/// variables are only created where the gain margin is nonnegative. Every
/// constraint lives in one frame, so each frame is solved on its own.
inline Plan solve_association_subproblem(const Plan& p, const RateTable& rates,
                                         const FramePlan& f, double eta,
                                         const std::vector<double>& qos) {
  const int K = p.users;
  const int J = p.targets;
  const int N = p.slots;
  const double inv_eta = 1.0 / eta;
  Plan res = p;
  for (int l = 0; l < f.frames(); ++l) {
    const int n0 = f.frame_begin(l);
    const int NL = f.frame_begin(l + 1) - n0;
    std::vector<int> alpha_idx(K * NL, -1);
    std::vector<int> e_idx(static_cast<std::size_t>(J) * K * NL, -1);
    auto aid = [&](int k, int n) -> int& { return alpha_idx[k * NL + (n - n0)]; };
    auto eid = [&](int j, int k, int n) -> int& {
      return e_idx[(static_cast<std::size_t>(j) * K + k) * NL + (n - n0)];
    };
    int nv = 0;
    for (int n = n0; n < n0 + NL; ++n) {
      for (int k = 0; k < K; ++k) aid(k, n) = nv++;
      for (int j = 0; j < J; ++j) {
        if (rates.margin(j, n) < 0) continue;
        for (int k = 0; k < K; ++k) eid(j, k, n) = nv++;
      }
    }

    convex::Program prog(nv);
    Eigen::VectorXd start(nv);
    auto set_var = [&](int idx, double rate_coef, double value, double bar) {
      prog.linear_cost[idx] = -rate_coef / N - bar * inv_eta;
      prog.quadratic_cost[idx] = ((1 - bar) * (1 - bar) + 1) * inv_eta;
      prog.set_bounds(idx, 0.0, 1.0);
      start[idx] = std::clamp(value, 0.0, 1.0);
    };
    for (int n = n0; n < n0 + NL; ++n) {
      for (int k = 0; k < K; ++k) {
        set_var(aid(k, n), rates.comm(k, n), p.alpha(k, n), p.alpha_bar(k, n));
        for (int j = 0; j < J; ++j) {
          if (eid(j, k, n) < 0) continue;
          set_var(eid(j, k, n), rates.isac_lb[j](k, n) - rates.comm(k, n), p.e[j](k, n),
                  p.e_bar[j](k, n));
        }
      }
    }

    for (int n = n0; n < n0 + NL; ++n) {
      std::vector<int> idx(K);
      for (int k = 0; k < K; ++k) idx[k] = aid(k, n);
      prog.add_inequality(idx, std::vector<double>(K, 1.0), 1.0);
      for (int k = 0; k < K; ++k) {
        std::vector<int> row{aid(k, n)};
        std::vector<double> coef{-1.0};
        for (int j = 0; j < J; ++j) {
          if (eid(j, k, n) >= 0) {
            row.push_back(eid(j, k, n));
            coef.push_back(1.0);
          }
        }
        if (row.size() > 1) prog.add_inequality(row, coef, 0.0);
      }
    }
    for (int j = 0; j < J; ++j) {
      std::vector<int> row;
      for (int n = n0; n < n0 + NL; ++n) {
        for (int k = 0; k < K; ++k) {
          if (eid(j, k, n) >= 0) row.push_back(eid(j, k, n));
        }
      }
      if (row.empty()) {
        throw SubproblemInfeasible("target " + std::to_string(j) +
                                   " is out of sensing reach throughout frame " +
                                   std::to_string(l));
      }
      prog.add_equality(row, std::vector<double>(row.size(), 1.0), 1.0);
    }
    for (int k = 0; k < K; ++k) {
      if (!(qos[k] > 0)) continue;
      std::vector<int> row;
      std::vector<double> coef;
      for (int n = n0; n < n0 + NL; ++n) {
        row.push_back(aid(k, n));
        coef.push_back(-rates.comm(k, n) / f.n_per_frame);
        for (int j = 0; j < J; ++j) {
          if (eid(j, k, n) < 0) continue;
          row.push_back(eid(j, k, n));
          coef.push_back(-(rates.isac_lb[j](k, n) - rates.comm(k, n)) / f.n_per_frame);
        }
      }
      prog.add_inequality(row, coef, -qos[k]);
    }

    const auto out = convex::solve(prog, start);
    if (out.status == convex::SolveStatus::Infeasible) {
      throw SubproblemInfeasible("association program infeasible in frame " + std::to_string(l) +
                                 " (QoS or sensing reach)");
    }
    if (out.status != convex::SolveStatus::Optimal && prog.max_violation(out.point) > 1e-6) {
      throw NonConvergence("association program did not converge");
    }

    auto take = [&](int idx) {
      const double v = std::clamp(out.point[idx], 0.0, 1.0);
      return v < kActivityFloor ? 0.0 : v;
    };
    for (int n = n0; n < n0 + NL; ++n) {
      for (int k = 0; k < K; ++k) {
        res.alpha(k, n) = take(aid(k, n));
        for (int j = 0; j < J; ++j) res.e[j](k, n) = eid(j, k, n) >= 0 ? take(eid(j, k, n)) : 0.0;
      }
    }
  }
  return res;
}

namespace detail {

inline int best_user_for_slot(const Plan& p, const RateTable& r, int n) {
  int best = 0;
  for (int k = 1; k < p.users; ++k) {
    const double a = p.alpha(k, n);
    const double b = p.alpha(best, n);
    if (a > b + 1e-12 || (std::abs(a - b) <= 1e-12 && r.comm(k, n) > r.comm(best, n))) best = k;
  }
  return best;
}

}  // namespace detail

/// Rounds a relaxed plan to a binary one. Per frame and target the slot with
/// the largest sensing weight is kept (ties: larger gain margin, then smaller
/// slot index), slots are kept distinct across targets, alpha covers the
/// sensing pairs and the remaining slots go to the relaxed argmax user. Frames
/// whose QoS then fails are repaired greedily by reassigning the cheapest
/// slots. Slack copies are set equal to the rounded values.
inline Plan recover_binary(const Plan& p, const FramePlan& f, const RateTable& rates,
                           const std::vector<double>& qos) {
  const int K = p.users;
  const int J = p.targets;
  const int N = p.slots;
  Plan b(K, J, N);
  std::vector<int> sense_target(N, -1);
  std::vector<int> sense_user(N, -1);
  constexpr double kTie = 1e-9;

  for (int l = 0; l < f.frames(); ++l) {
    const int n0 = f.frame_begin(l);
    const int n1 = f.frame_begin(l + 1);
    // Targets with the most decided sensing weight pick first.
    std::vector<int> order(J);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> peak(J, 0.0);
    for (int j = 0; j < J; ++j) {
      for (int n = n0; n < n1; ++n) peak[j] = std::max(peak[j], p.sensing(j, n));
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int c) { return peak[a] > peak[c]; });
    for (int j : order) {
      int chosen = -1;
      for (int n = n0; n < n1; ++n) {
        if (sense_target[n] >= 0 || rates.margin(j, n) < 0) continue;
        if (chosen < 0) {
          chosen = n;
          continue;
        }
        const double wn = p.sensing(j, n);
        const double wc = p.sensing(j, chosen);
        if (wn > wc + kTie ||
            (std::abs(wn - wc) <= kTie && rates.margin(j, n) > rates.margin(j, chosen) + kTie)) {
          chosen = n;
        }
      }
      if (chosen < 0) {
        throw RoundingInfeasible("no free slot within sensing reach for target " +
                                 std::to_string(j) + " in frame " + std::to_string(l));
      }
      int user = 0;
      for (int k = 1; k < K; ++k) {
        const double a = p.e[j](k, chosen);
        const double c = p.e[j](user, chosen);
        if (a > c + kTie ||
            (std::abs(a - c) <= kTie && rates.isac_lb[j](k, chosen) > rates.isac_lb[j](user, chosen))) {
          user = k;
        }
      }
      sense_target[chosen] = j;
      sense_user[chosen] = user;
    }
  }
  for (int n = 0; n < N; ++n) {
    if (sense_target[n] >= 0) {
      b.alpha(sense_user[n], n) = 1.0;
      b.e[sense_target[n]](sense_user[n], n) = 1.0;
    } else {
      b.alpha(detail::best_user_for_slot(p, rates, n), n) = 1.0;
    }
  }

  // QoS repair on the lower-bound rates.
  for (int l = 0; l < f.frames(); ++l) {
    for (int pass = 0; pass < K * f.n_per_frame; ++pass) {
      int needy = -1;
      double worst = 0.0;
      for (int k = 0; k < K; ++k) {
        const double gap = qos[k] - frame_rate(b, rates, f, k, l);
        if (gap > 1e-12 && gap > worst) {
          worst = gap;
          needy = k;
        }
      }
      if (needy < 0) break;
      int best_slot = -1;
      double best_loss = std::numeric_limits<double>::infinity();
      for (int n = f.frame_begin(l); n < f.frame_begin(l + 1); ++n) {
        const int cur = b.served_user(n);
        if (cur == needy) continue;
        const int j = sense_target[n];
        const double gain = j >= 0 ? rates.isac_lb[j](needy, n) : rates.comm(needy, n);
        const double lost = cur < 0 ? 0.0 : (j >= 0 ? rates.isac_lb[j](cur, n) : rates.comm(cur, n));
        // The donor must keep its own QoS.
        if (cur >= 0 && frame_rate(b, rates, f, cur, l) - lost / f.n_per_frame < qos[cur] - 1e-12) {
          continue;
        }
        const double loss = lost - gain;
        if (loss < best_loss) {
          best_loss = loss;
          best_slot = n;
        }
      }
      if (best_slot < 0) {
        throw RoundingInfeasible("QoS of user " + std::to_string(needy) +
                                 " cannot be restored in frame " + std::to_string(l));
      }
      const int cur = b.served_user(best_slot);
      if (cur >= 0) b.alpha(cur, best_slot) = 0.0;
      b.alpha(needy, best_slot) = 1.0;
      if (sense_target[best_slot] >= 0) {
        const int j = sense_target[best_slot];
        b.e[j].col(best_slot).setZero();
        b.e[j](needy, best_slot) = 1.0;
        sense_user[best_slot] = needy;
      }
    }
    for (int k = 0; k < K; ++k) {
      if (frame_rate(b, rates, f, k, l) < qos[k] - 1e-12) {
        throw RoundingInfeasible("QoS of user " + std::to_string(k) +
                                 " cannot be restored in frame " + std::to_string(l));
      }
    }
  }
  b.alpha_bar = b.alpha;
  b.e_bar = b.e;
  return b;
}

}  // namespace isac
