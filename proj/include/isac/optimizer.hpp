#pragma once

// Two-layer penalty planner: Gauss-Seidel rounds of slack update, association
// and trajectory SCA inside, geometric penalty decrease outside. Also the
// frame mirroring / stretching constructions, the low-complexity planner and
// the straight-flight and fly-hover-fly benchmarks.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isac/beamforming.hpp"
#include "isac/convex.hpp"
#include "isac/errors.hpp"
#include "isac/geometry.hpp"
#include "isac/scenario.hpp"
#include "isac/schedule.hpp"
#include "isac/trajectory.hpp"

namespace isac {

enum class Block { Slack, Association, Trajectory };

/// Penalized objective after one block update.
struct BlockTrace {
  int outer = 0;
  int inner = 0;
  Block block = Block::Slack;
  double objective = 0.0;
};

struct SolveReport {
  Plan plan;
  Trajectory trajectory;
  std::vector<ComplexVector> beams;
  std::vector<double> slot_rates;     // exact, summed over users (one is served)
  std::vector<double> slot_rates_lb;  // lower bound
  double mean_rate = 0.0;
  double lower_bound_rate = 0.0;
  Eigen::MatrixXd per_frame_rates;  // K x L, exact
  std::vector<double> violation_history;
  std::vector<BlockTrace> trace;
  int inner_iterations = 0;
  int outer_iterations = 0;
  bool converged = false;
  int restart = 0;
  std::string status;
};

/// One frame of a plan together with the path flown during it.
struct FrameSolution {
  Trajectory trajectory;
  Plan plan;
};

namespace detail {

inline Plan plan_columns(const Plan& p, const std::vector<int>& cols) {
  Plan out(p.users, p.targets, static_cast<int>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.alpha.col(i) = p.alpha.col(cols[i]);
    out.alpha_bar.col(i) = p.alpha_bar.col(cols[i]);
    for (int j = 0; j < p.targets; ++j) {
      out.e[j].col(i) = p.e[j].col(cols[i]);
      out.e_bar[j].col(i) = p.e_bar[j].col(cols[i]);
    }
  }
  return out;
}

/// Points on the segment a -> b reached after 1..slots equal steps.
inline std::vector<GroundPoint> dash(GroundPoint a, GroundPoint b, int slots) {
  std::vector<GroundPoint> out;
  for (int i = 1; i <= slots; ++i) {
    const double t = static_cast<double>(i) / slots;
    out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
  }
  return out;
}

inline int dash_slots(GroundPoint a, GroundPoint b, double step) {
  const double d = horizontal_distance(a, b);
  if (d <= kPathTolerance * std::max(step, 1.0)) return 0;
  if (!(step > 0)) return -1;
  return static_cast<int>(std::ceil(d / step - 1e-9));
}

inline void fill_report(SolveReport& r, const Scenario& s) {
  const int N = r.trajectory.slots();
  const int K = s.user_count();
  const int L = s.frames.frames();
  const RateTable rates = compute_rates(r.trajectory, s);
  r.beams.assign(N, ComplexVector());
  r.slot_rates.assign(N, 0.0);
  r.slot_rates_lb.assign(N, 0.0);
  r.per_frame_rates = Eigen::MatrixXd::Zero(K, L);
  for (int n = 0; n < N; ++n) {
    const UavPosition q = r.trajectory.at(n);
    for (int k = 0; k < K; ++k) r.slot_rates_lb[n] += plan_rate(r.plan, rates, k, n);
    const int k = r.plan.served_user(n);
    if (k < 0) {
      r.beams[n] = ComplexVector::Zero(s.array.antenna_count());
      continue;
    }
    const int j = r.plan.sensed_target(n);
    double rate = 0.0;
    if (j >= 0) {
      const auto bf = optimal_beamformer(q, s.users[k], s.targets[j], s.radio, s.array);
      r.beams[n] = bf.w;
      rate = slot_rate(q, s.users[k], s.targets[j], s.radio, s.array);
    } else {
      r.beams[n] = mrt_beamformer(q, s.users[k], s.radio, s.array).w;
      rate = comm_rate(q, s.users[k], s.radio, s.array);
    }
    r.slot_rates[n] = rate;
    r.per_frame_rates(k, s.frames.frame_of(n)) += rate / s.frames.n_per_frame;
  }
  r.mean_rate = std::accumulate(r.slot_rates.begin(), r.slot_rates.end(), 0.0) / N;
  r.lower_bound_rate = std::accumulate(r.slot_rates_lb.begin(), r.slot_rates_lb.end(), 0.0) / N;
}

inline std::string describe(const std::vector<Violation>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : "; ") + x.describe();
  return out;
}

/// Trajectory SCA round that never lowers the plan's lower-bound objective.
/// Returns false when the round was rejected.
inline bool trajectory_round(Trajectory& q, RateTable& rates, const Plan& p, const Scenario& s,
                             double trust) {
  TrajectoryStep step;
  try {
    step = solve_trajectory_subproblem(q, p, s, trust);
  } catch (const NonConvergence&) {
    return false;
  } catch (const SubproblemInfeasible&) {
    return false;
  }
  RateTable next = compute_rates(step.trajectory, s);
  if (mean_plan_rate(p, next) < mean_plan_rate(p, rates)) return false;
  if (!check_trajectory_feasibility(step.trajectory, p, s).empty()) return false;
  q = std::move(step.trajectory);
  rates = std::move(next);
  return true;
}

}  // namespace detail

/// Algorithm 1 from a given initial path. With move_trajectory false the
/// trajectory block is skipped (benchmarks, low-complexity re-association).
inline SolveReport run_penalty(const Scenario& s, const PenaltyConfig& cfg, Trajectory q,
                               bool move_trajectory) {
  const int K = s.user_count();
  const int J = s.target_count();
  const int N = q.slots();
  const FramePlan& f = s.frames;
  SolveReport rep;
  RateTable rates = compute_rates(q, s);

  // Start from the linear program (penalty weight negligible).
  Plan p = solve_association_subproblem(Plan(K, J, N), rates, f, 1e12, s.qos);

  // Best rounded plan seen at the start and after each outer iteration. The residual can
  // plateau on fractional plans, and rounding the last one may lose more
  // than rounding an earlier one.
  struct Incumbent {
    Trajectory trajectory;
    RateTable rates;
    Plan plan;
    double value;
  };
  std::optional<Incumbent> incumbent;
  auto consider = [&](const Plan& relaxed) {
    try {
      Plan b = recover_binary(relaxed, f, rates, s.qos);
      const double v = mean_plan_rate(b, rates);
      if (!incumbent || v > incumbent->value) incumbent = Incumbent{q, rates, std::move(b), v};
    } catch (const RoundingInfeasible&) {
    }
  };
  consider(p);
  double eta = cfg.eta0;
  int outer = 0;
  for (; outer < cfg.max_outer; ++outer) {
    double c_prev = penalty_objective(p, rates, eta);
    int inner = 0;
    for (; inner < cfg.max_inner; ++inner) {
      p = slack_update(p);
      const double c_slack = penalty_objective(p, rates, eta);
      rep.trace.push_back({outer, inner, Block::Slack, c_slack});

      Plan next = solve_association_subproblem(p, rates, f, eta, s.qos);
      // Ties within solver round-off count as no worse.
      if (penalty_objective(next, rates, eta) >= c_slack - 1e-9 * (1.0 + std::abs(c_slack))) {
        p = std::move(next);
      }
      rep.trace.push_back({outer, inner, Block::Association, penalty_objective(p, rates, eta)});

      if (move_trajectory) {
        detail::trajectory_round(q, rates, p, s, cfg.trust_radius);
        rep.trace.push_back({outer, inner, Block::Trajectory, penalty_objective(p, rates, eta)});
      }
      const double c = penalty_objective(p, rates, eta);
      ++rep.inner_iterations;
      if (std::abs(c - c_prev) <= cfg.eps_inner) break;
      c_prev = c;
    }
    rep.violation_history.push_back(binary_violation(p));
    if (rep.violation_history.back() <= cfg.xi) {
      rep.converged = true;
      ++outer;
      break;
    }
    consider(p);
    eta *= cfg.scale_z;
  }
  rep.outer_iterations = outer;

  std::optional<Plan> rounded;
  try {
    rounded = recover_binary(p, f, rates, s.qos);
  } catch (const RoundingInfeasible&) {
    if (!incumbent) throw;
  }
  Plan b = rounded ? std::move(*rounded) : Plan(K, J, N);
  if (incumbent && (!rounded || incumbent->value > mean_plan_rate(b, rates))) {
    q = std::move(incumbent->trajectory);
    rates = std::move(incumbent->rates);
    b = std::move(incumbent->plan);
  }
  if (move_trajectory) {
    for (int i = 0; i < cfg.max_inner; ++i) {
      const double before = mean_plan_rate(b, rates);
      if (!detail::trajectory_round(q, rates, b, s, cfg.trust_radius)) break;
      if (mean_plan_rate(b, rates) - before <= cfg.eps_inner) break;
    }
  }
  rep.plan = std::move(b);
  rep.trajectory = std::move(q);
  detail::fill_report(rep, s);

  auto bad = validate_plan(rep.plan, f, true);
  const auto path = check_trajectory_feasibility(rep.trajectory, rep.plan, s);
  bad.insert(bad.end(), path.begin(), path.end());
  if (!bad.empty()) {
    throw Infeasible("planner produced an infeasible plan: " + detail::describe(bad));
  }
  rep.status = rep.converged ? "converged"
                             : "iteration cap reached before the binary residual fell below xi";
  return rep;
}

/// Initial path for restart `attempt`: the straight line (attempt 0) or a
/// version of it bent toward a random user, then moved so that every target
/// is in sensing reach at one designated slot of each frame.
inline Trajectory initial_trajectory(const Scenario& s, int attempt, std::mt19937_64& rng) {
  Trajectory base = straight_line(s);
  const int N = base.slots();
  const int J = s.target_count();
  std::vector<int> order(J);
  std::iota(order.begin(), order.end(), 0);
  if (attempt > 0) {
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> pick(0, s.user_count() - 1);
    std::uniform_real_distribution<double> frac(0.2, 0.8);
    const GroundPoint lure = s.users[pick(rng)];
    const double a = frac(rng);
    for (int n = 0; n < N; ++n) {
      const double w = N > 1 ? a * std::sin(std::numbers::pi * n / (N - 1)) : a;
      const double wn = (s.start ? w : a);
      auto& pt = base.points[n];
      pt = {std::clamp(pt.x + wn * (lure.x - pt.x), s.area.x_min, s.area.x_max),
            std::clamp(pt.y + wn * (lure.y - pt.y), s.area.y_min, s.area.y_max)};
    }
  }
  for (int tries = 0; tries < std::max(1, J); ++tries) {
    if (auto t = seek_sensing_reach(base, s, order)) return *t;
    std::rotate(order.begin(), order.begin() + 1, order.end());
  }
  throw Infeasible("no path keeps every target within sensing reach once per frame");
}

inline GroundPoint fhf_hover_point(const Scenario& s);
inline Trajectory fly_hover_fly(const Scenario& s, GroundPoint hover);

/// Algorithm 1 from the restart paths, the fly-hover-fly path (when one
/// exists) and any extra starts; the report with the largest lower-bound rate
/// wins. Throws the first error when every start fails.
inline SolveReport solve_p1(const Scenario& s, const PenaltyConfig& cfg,
                            const std::vector<Trajectory>& extra_starts = {}) {
  s.validate();
  cfg.validate();
  std::mt19937_64 rng(s.seed);
  std::optional<SolveReport> best;
  std::string first_error;
  bool first_nonconv = false;
  std::vector<Trajectory> seeds;
  // The hover path fixes which user to hover over, a choice local steps
  // from the restart paths cannot revisit.
  try {
    seeds.push_back(fly_hover_fly(s, fhf_hover_point(s)));
  } catch (const Infeasible&) {
  }
  seeds.insert(seeds.end(), extra_starts.begin(), extra_starts.end());
  const int runs = cfg.restarts + static_cast<int>(seeds.size());
  for (int r = 0; r < runs; ++r) {
    try {
      Trajectory init = r < cfg.restarts ? initial_trajectory(s, r, rng)
                                         : seeds[r - cfg.restarts];
      SolveReport rep = run_penalty(s, cfg, std::move(init), true);
      rep.restart = r;
      // Every report carries a rounded feasible plan, so rate decides.
      const bool better = !best || rep.lower_bound_rate > best->lower_bound_rate;
      if (better) best = std::move(rep);
    } catch (const NonConvergence& ex) {
      if (first_error.empty()) {
        first_error = ex.what();
        first_nonconv = true;
      }
    } catch (const Infeasible& ex) {
      if (first_error.empty()) first_error = ex.what();
    }
  }
  if (!best) {
    if (first_nonconv) throw NonConvergence(first_error);
    throw Infeasible(first_error);
  }
  return *best;
}

/// Repeats one frame over L frames, reversing every other copy so that the
/// path is continuous at the frame boundaries.
inline FrameSolution mirror_frames(const FrameSolution& frame, int frames) {
  const int NL = frame.trajectory.slots();
  std::vector<int> cols;
  FrameSolution out{frame.trajectory, Plan()};
  out.trajectory.points.clear();
  out.trajectory.start.reset();
  out.trajectory.finish.reset();
  for (int l = 0; l < frames; ++l) {
    for (int i = 0; i < NL; ++i) {
      const int n = l % 2 == 0 ? i : NL - 1 - i;
      cols.push_back(n);
      out.trajectory.points.push_back(frame.trajectory.points[n]);
    }
  }
  out.plan = detail::plan_columns(frame.plan, cols);
  return out;
}

/// Stretches a frame to n_new slots by repeating slots in place. Repeats
/// communicate only. They first serve users whose frame-average QoS the
/// longer frame would dilute, each at its strongest slot, and the rest serve
/// the strongest (slot, user) pair, which rates at least as high as the best
/// original slot. Each target is still sensed once, so the mean rate cannot
/// fall unless QoS repeats are needed.
inline FrameSolution extend_frame(const FrameSolution& frame, int n_new, const Scenario& s) {
  const int NL = frame.trajectory.slots();
  const int K = frame.plan.users;
  if (n_new < NL) throw std::invalid_argument("frame can only grow");
  if (n_new == NL) return frame;
  const RateTable rates = compute_rates(frame.trajectory, s);
  auto strongest = [&](int k) {
    int best = 0;
    for (int n = 1; n < NL; ++n) {
      if (rates.comm(k, n) > rates.comm(k, best)) best = n;
    }
    return best;
  };
  std::vector<double> deficit(K, 0.0);
  for (int k = 0; k < K; ++k) {
    double have = 0.0;
    for (int n = 0; n < NL; ++n) have += plan_rate(frame.plan, rates, k, n);
    deficit[k] = (k < static_cast<int>(s.qos.size()) ? s.qos[k] : 0.0) * n_new - have;
  }
  // repeats[n] lists the users served by the copies inserted after slot n.
  std::vector<std::vector<int>> repeats(NL);
  int left = n_new - NL;
  while (left > 0) {
    const int k =
        static_cast<int>(std::max_element(deficit.begin(), deficit.end()) - deficit.begin());
    if (!(deficit[k] > 0)) break;
    const int n = strongest(k);
    repeats[n].push_back(k);
    deficit[k] -= rates.comm(k, n);
    --left;
  }
  int top_user = 0;
  for (int k = 1; k < K; ++k) {
    if (rates.comm(k, strongest(k)) > rates.comm(top_user, strongest(top_user))) top_user = k;
  }
  repeats[strongest(top_user)].insert(repeats[strongest(top_user)].end(), left, top_user);

  std::vector<int> cols;
  std::vector<int> served;  // -1 keeps the original column
  for (int n = 0; n < NL; ++n) {
    cols.push_back(n);
    served.push_back(-1);
    for (int k : repeats[n]) {
      cols.push_back(n);
      served.push_back(k);
    }
  }
  FrameSolution out{frame.trajectory, detail::plan_columns(frame.plan, cols)};
  out.trajectory.points.clear();
  for (int c : cols) out.trajectory.points.push_back(frame.trajectory.points[c]);
  for (int i = 0; i < n_new; ++i) {
    if (served[i] < 0) continue;
    out.plan.alpha.col(i).setZero();
    out.plan.alpha(served[i], i) = 1.0;
    out.plan.alpha_bar.col(i) = out.plan.alpha.col(i);
    for (int j = 0; j < out.plan.targets; ++j) {
      out.plan.e[j].col(i).setZero();
      out.plan.e_bar[j].col(i).setZero();
    }
  }
  return out;
}

/// Single-frame, free-endpoint copy of a scenario.
inline Scenario one_frame(const Scenario& s) {
  Scenario f = s;
  f.frames.n_total = s.frames.n_per_frame;
  f.start.reset();
  f.finish.reset();
  return f;
}

/// Path that dashes at full speed from the start to the nearer end of
/// `loop`, flies it back and forth, and dashes to the finish. The last
/// traversal is cut short so that the final dash fits.
inline Trajectory compose_back_and_forth(const Scenario& s, const std::vector<GroundPoint>& loop) {
  const int N = s.frames.n_total;
  const int NL = static_cast<int>(loop.size());
  const double step = s.max_step();
  std::vector<GroundPoint> seq = loop;
  int head = 0;
  if (s.start) {
    if (horizontal_distance(*s.start, loop.back()) < horizontal_distance(*s.start, loop.front())) {
      std::reverse(seq.begin(), seq.end());
    }
    head = detail::dash_slots(*s.start, seq.front(), step);
    if (head < 0) throw Infeasible("start is away from the loop but the UAV cannot move");
  }
  auto traversal = [&](int i) {
    const int lap = i / NL;
    const int pos = i % NL;
    return seq[lap % 2 == 0 ? pos : NL - 1 - pos];
  };
  // Traversal occupies slots [head', head' + len) where head' is the slot that
  // reaches the loop; with a start the first slot is the start itself.
  const int first = s.start ? (head == 0 ? 0 : head) : 0;
  int len = N - first;
  int tail = 0;
  if (s.finish) {
    for (; len >= 1; --len) {
      tail = detail::dash_slots(traversal(len - 1), *s.finish, step);
      if (tail >= 0 && first + len + tail <= N) break;
    }
    if (len < 1) throw Infeasible("dashes to and from the loop do not fit in the horizon");
    tail = N - first - len;  // slack slots slow the final dash down
  }
  std::vector<GroundPoint> pts;
  if (s.start) {
    pts.push_back(*s.start);
    if (head > 0) {
      auto d = detail::dash(*s.start, seq.front(), head);
      d.pop_back();  // the loop's first point follows
      pts.insert(pts.end(), d.begin(), d.end());
    }
  }
  for (int i = (s.start && head == 0) ? 1 : 0; i < len; ++i) pts.push_back(traversal(i));
  if (s.finish && tail > 0) {
    auto d = detail::dash(pts.back(), *s.finish, tail);
    pts.insert(pts.end(), d.begin(), d.end());
  }
  if (static_cast<int>(pts.size()) != N) throw Infeasible("dash budgeting did not fill the horizon");
  return make_trajectory(s, std::move(pts));
}

/// Low-complexity planner: one free-endpoint frame by Algorithm 1, flown back
/// and forth between full-speed dashes, then association and sensing
/// re-planned on the frozen path.
inline SolveReport solve_low_complexity(const Scenario& s, const PenaltyConfig& cfg) {
  s.validate();
  cfg.validate();
  const Scenario f1 = one_frame(s);
  const SolveReport frame = solve_p1(f1, cfg);
  const Trajectory path = compose_back_and_forth(s, frame.trajectory.points);
  SolveReport rep = run_penalty(s, cfg, path, false);

  // With zero-length dashes the mirrored frame plan is itself admissible.
  const FrameSolution mirrored =
      mirror_frames({frame.trajectory, frame.plan}, s.frames.frames());
  bool same_path = true;
  for (int n = 0; n < s.frames.n_total && same_path; ++n) {
    same_path = horizontal_distance(mirrored.trajectory.points[n], path.points[n]) < 1e-9;
  }
  if (same_path && validate_plan(mirrored.plan, s.frames, true).empty() &&
      check_trajectory_feasibility(path, mirrored.plan, s).empty()) {
    SolveReport alt = rep;
    alt.plan = mirrored.plan;
    detail::fill_report(alt, s);
    if (alt.lower_bound_rate > rep.lower_bound_rate) rep = std::move(alt);
  }
  return rep;
}

enum class BenchmarkKind { StraightFlight, FlyHoverFly };

namespace detail {

/// Best relaxed per-frame sum rate when hovering at q (every slot alike):
/// fractions of the communication slots per user and of each target's
/// sensing slot per user, subject to the QoS floors. -inf when some target is
/// out of reach or the floors cannot be met.
inline double hover_value(GroundPoint h, const Scenario& s) {
  if (!s.area.contains(h)) return -std::numeric_limits<double>::infinity();
  const int K = s.user_count();
  const int J = s.target_count();
  const int NL = s.frames.n_per_frame;
  const UavPosition q = at_altitude(h, s.altitude);
  std::vector<double> rc(K);
  for (int k = 0; k < K; ++k) rc[k] = comm_rate(q, s.users[k], s.radio, s.array);
  Eigen::MatrixXd rj(J, K);
  for (int j = 0; j < J; ++j) {
    const double m = gain_margin(q, s.targets[j], s.radio, s.array);
    if (m < 0) return -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      rj(j, k) = std::log2(1.0 + s.radio.gamma0() * m / distance_sq(q, s.users[k]));
    }
  }
  const double nc = NL - J;
  if (nc < 0) return -std::numeric_limits<double>::infinity();
  // Variables: a_k (K), then s_jk (J * K). Rates are per slot of the frame.
  convex::Program prog(K + J * K);
  for (int i = 0; i < K + J * K; ++i) prog.set_bounds(i, 0.0, 1.0);
  for (int k = 0; k < K; ++k) prog.linear_cost[k] = -nc * rc[k] / NL;
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < K; ++k) prog.linear_cost[K + j * K + k] = -rj(j, k) / NL;
  }
  std::vector<int> all(K);
  std::iota(all.begin(), all.end(), 0);
  if (nc > 0) prog.add_inequality(all, std::vector<double>(K, 1.0), 1.0);
  for (int j = 0; j < J; ++j) {
    std::vector<int> row(K);
    for (int k = 0; k < K; ++k) row[k] = K + j * K + k;
    prog.add_equality(row, std::vector<double>(K, 1.0), 1.0);
  }
  for (int k = 0; k < K; ++k) {
    if (!(s.qos[k] > 0)) continue;
    std::vector<int> row{k};
    std::vector<double> coef{-nc * rc[k] / NL};
    for (int j = 0; j < J; ++j) {
      row.push_back(K + j * K + k);
      coef.push_back(-rj(j, k) / NL);
    }
    prog.add_inequality(row, coef, -s.qos[k]);
  }
  const auto out = convex::solve(prog);
  if (out.status == convex::SolveStatus::Infeasible) return -std::numeric_limits<double>::infinity();
  return -out.objective_value;
}

}  // namespace detail

/// Hover point of the fly-hover-fly benchmark: compass search on the relaxed
/// hover value over points the dashes can reach, from the users, the targets,
/// pairwise infinite-array hover points, the centroid and the endpoint midpoint.
inline GroundPoint fhf_hover_point(const Scenario& s) {
  std::vector<GroundPoint> starts;
  GroundPoint c{0.0, 0.0};
  for (const auto& t : s.targets) c = {c.x + t.x, c.y + t.y};
  if (!s.targets.empty()) {
    c = {c.x / s.target_count(), c.y / s.target_count()};
    starts.push_back(c);
  }
  for (const auto& u : s.users) {
    starts.push_back(u);
    for (const auto& v : s.targets) {
      try {
        starts.push_back(optimal_hover_point(u, v, s.radio, s.array, s.altitude));
      } catch (const Error&) {
      }
      starts.push_back({0.5 * (u.x + v.x), 0.5 * (u.y + v.y)});
    }
  }
  for (const auto& v : s.targets) starts.push_back(v);
  if (s.start && s.finish) {
    starts.push_back({0.5 * (s.start->x + s.finish->x), 0.5 * (s.start->y + s.finish->y)});
  }

  // Hover points whose dashes do not fit in the horizon are excluded.
  const double step = s.max_step();
  const int N = s.frames.n_total;
  auto value = [&](GroundPoint h) {
    const int head = s.start ? detail::dash_slots(*s.start, h, step) : 0;
    const int tail = s.finish ? detail::dash_slots(h, *s.finish, step) : 0;
    if (head < 0 || tail < 0 || head + tail > N - 1) {
      return -std::numeric_limits<double>::infinity();
    }
    return detail::hover_value(h, s);
  };

  GroundPoint best{};
  double best_v = -std::numeric_limits<double>::infinity();
  const double span = std::max(s.area.x_max - s.area.x_min, s.area.y_max - s.area.y_min);
  for (GroundPoint p : starts) {
    double v = value(p);
    if (!std::isfinite(v)) continue;
    for (double h = 0.05 * span; h > 1e-3; h *= 0.5) {
      bool moved = true;
      while (moved) {
        moved = false;
        for (auto [dx, dy] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0},
                              {0.7071, 0.7071}, {-0.7071, 0.7071}, {0.7071, -0.7071},
                              {-0.7071, -0.7071}}) {
          const GroundPoint c2{p.x + h * dx, p.y + h * dy};
          const double v2 = value(c2);
          if (v2 > v + 1e-12) {
            v = v2;
            p = c2;
            moved = true;
          }
        }
      }
    }
    if (v > best_v) {
      best_v = v;
      best = p;
    }
  }
  if (!std::isfinite(best_v)) {
    throw BenchmarkInfeasible(
        "no reachable hover point keeps every target in reach with the QoS floors met");
  }
  return best;
}

/// Full-speed dash to the hover point, hover, full-speed dash to the finish.
inline Trajectory fly_hover_fly(const Scenario& s, GroundPoint hover) {
  const int N = s.frames.n_total;
  const double step = s.max_step();
  const int head = s.start ? detail::dash_slots(*s.start, hover, step) : 0;
  const int tail = s.finish ? detail::dash_slots(hover, *s.finish, step) : 0;
  if (head < 0 || tail < 0 || head + tail > N - 1) {
    throw BenchmarkInfeasible("hover point cannot be reached and left within the horizon");
  }
  std::vector<GroundPoint> pts;
  if (s.start) {
    pts.push_back(*s.start);
    auto d = detail::dash(*s.start, hover, head);
    pts.insert(pts.end(), d.begin(), d.end());
  }
  while (static_cast<int>(pts.size()) < N - tail) pts.push_back(hover);
  if (s.finish) {
    auto d = detail::dash(hover, *s.finish, tail);
    pts.insert(pts.end(), d.begin(), d.end());
  }
  return make_trajectory(s, std::move(pts));
}

/// Benchmarks: association, sensing and beams by Algorithm 1 on a fixed path.
inline SolveReport benchmark(BenchmarkKind kind, const Scenario& s, const PenaltyConfig& cfg) {
  s.validate();
  cfg.validate();
  const Trajectory path = kind == BenchmarkKind::StraightFlight
                              ? straight_line(s)
                              : fly_hover_fly(s, fhf_hover_point(s));
  try {
    return run_penalty(s, cfg, path, false);
  } catch (const BenchmarkInfeasible&) {
    throw;
  } catch (const Infeasible& ex) {
    throw BenchmarkInfeasible(std::string(kind == BenchmarkKind::StraightFlight ? "SF" : "FHF") +
                              ": " + ex.what());
  }
}

}  // namespace isac
