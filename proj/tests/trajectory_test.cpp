#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "isac/trajectory.hpp"

namespace {

using namespace isac;

Scenario small_scenario(int n_total, int n_per_frame) {
  Scenario s;
  s.users = {{-40.0, 30.0}, {50.0, -20.0}};
  s.targets = {{0.0, 40.0}};
  s.frames.n_total = n_total;
  s.frames.n_per_frame = n_per_frame;
  s.qos.assign(2, 0.0);
  return s;
}

TEST(SurrogateCommRate, TangentAndUnderEstimator) {
  const double a = 1.6e7;
  for (double z_ref : {1600.0, 1e4, 2.5e5}) {
    EXPECT_NEAR(surrogate_comm_rate(z_ref, z_ref, a), std::log2(1 + a / z_ref), 1e-12);
    for (int i = 0; i <= 2000; ++i) {
      const double z = 1600.0 + i * 500.0;
      EXPECT_LE(surrogate_comm_rate(z, z_ref, a), std::log2(1 + a / z) + 1e-12);
    }
    const double h = z_ref * 1e-6;
    const double fd = (std::log2(1 + a / (z_ref + h)) - std::log2(1 + a / (z_ref - h))) / (2 * h);
    const double slope = (surrogate_comm_rate(z_ref + 1, z_ref, a) - surrogate_comm_rate(z_ref, z_ref, a));
    EXPECT_NEAR(slope, fd, 1e-9 * std::max(1.0, std::abs(fd)) + 1e-12);
  }
}

TEST(TildeIsacRate, ReducesToCommRateWithoutThreshold) {
  RadioParams r;
  r.gamma_th = 0.0;
  ArrayGeometry g;
  const UavPosition q{10, 20, 40};
  const GroundPoint u{100, -30};
  EXPECT_NEAR(tilde_isac_rate(distance_sq(q, u), 1e9, r, g), comm_rate(q, u, r, g), 1e-12);
}

TEST(TildeIsacRate, MatchesLowerBoundAtTightSlacks) {
  RadioParams r;
  ArrayGeometry g;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> xy(-120, 120);
  for (int i = 0; i < 200; ++i) {
    const UavPosition q{xy(rng), xy(rng), 40};
    const GroundPoint u{xy(rng), xy(rng)};
    const GroundPoint v{q.x + 0.5 * xy(rng), q.y + 0.5 * xy(rng)};
    if (gain_margin(q, v, r, g) < 0) continue;
    EXPECT_NEAR(tilde_isac_rate(distance_sq(q, u), distance_sq(q, v), r, g),
                rate_lower_bound(q, u, v, r, g), 1e-12);
  }
}

TEST(TildeIsacRate, AnalyticHessianMatchesFiniteDifferences) {
  RadioParams r;
  ArrayGeometry g;
  for (int p : {2, 4}) {
    r.pathloss_exponent_sensing = p;
    const double zc = 5000.0;
    const double zr = p == 2 ? 9000.0 : 120.0;
    const auto h = tilde_isac_hessian(zc, zr, r, g);
    const double ec = 1e-2 * zc, er = 1e-2 * zr;
    auto f = [&](double a, double b) { return tilde_isac_rate(a, b, r, g); };
    const double fcc = (f(zc + ec, zr) - 2 * f(zc, zr) + f(zc - ec, zr)) / (ec * ec);
    const double frr = (f(zc, zr + er) - 2 * f(zc, zr) + f(zc, zr - er)) / (er * er);
    const double fcr = (f(zc + ec, zr + er) - f(zc + ec, zr - er) - f(zc - ec, zr + er) +
                        f(zc - ec, zr - er)) / (4 * ec * er);
    EXPECT_NEAR(h[0][0], fcc, 1e-3 * std::abs(fcc));
    EXPECT_NEAR(h[1][1], frr, 1e-3 * std::abs(frr) + 1e-20);
    EXPECT_NEAR(h[0][1], fcr, 1e-3 * std::abs(fcr));
  }
}

// The sensing-slot rate is convex, not concave, in the user slack distance:
// the (z_c, z_c) curvature is positive wherever the gain margin is positive.
TEST(TildeIsacRate, CurvatureInUserDistanceIsPositive) {
  RadioParams r;
  ArrayGeometry g;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> zc(1600, 3e5);
  std::uniform_real_distribution<double> zr(1600, 2.6e4);
  for (int i = 0; i < 1000; ++i) {
    const auto h = tilde_isac_hessian(zc(rng), zr(rng), r, g);
    EXPECT_GT(h[0][0], 0.0);
  }
}

TEST(IsacRateMinorant, ConcaveBelowAndTight) {
  ArrayGeometry g;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> zc(1600, 3e5);
  for (int p : {2, 4}) {
    RadioParams r;
    r.pathloss_exponent_sensing = p;
    if (p == 4) r.gamma_th = 1e-8;
    const double zr_max = p == 4 ? std::sqrt(16 * r.p_max / r.gamma_th) : 16 * r.p_max / r.gamma_th;
    std::uniform_real_distribution<double> zr(1600, zr_max);
    for (int i = 0; i < 1000; ++i) {
      const double c = zc(rng), v = zr(rng), ref = zc(rng);
      EXPECT_LE(isac_rate_minorant(c, v, ref, r, g), tilde_isac_rate(c, v, r, g) + 1e-12);
      EXPECT_NEAR(isac_rate_minorant(ref, v, ref, r, g), tilde_isac_rate(ref, v, r, g), 1e-12);
      // Numeric Hessian of the minorant.
      const double ec = 1e-3 * c, er = 1e-3 * v;
      auto f = [&](double a, double b) { return isac_rate_minorant(a, b, ref, r, g); };
      Eigen::Matrix2d h;
      h(0, 0) = (f(c + ec, v) - 2 * f(c, v) + f(c - ec, v)) / (ec * ec);
      h(1, 1) = (f(c, v + er) - 2 * f(c, v) + f(c, v - er)) / (er * er);
      h(0, 1) = h(1, 0) = (f(c + ec, v + er) - f(c + ec, v - er) - f(c - ec, v + er) +
                           f(c - ec, v - er)) / (4 * ec * er);
      const double scale = h.cwiseAbs().maxCoeff();
      EXPECT_LE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(h).eigenvalues().maxCoeff(),
                1e-4 * scale + 1e-18);
    }
  }
}

TEST(GainMargin, ConcaveInPosition) {
  RadioParams r;
  ArrayGeometry g;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> xy(-300, 300);
  for (int p : {2, 4}) {
    r.pathloss_exponent_sensing = p;
    for (int i = 0; i < 1000; ++i) {
      const GroundPoint v{xy(rng), xy(rng)};
      const UavPosition a{xy(rng), xy(rng), 40}, b{xy(rng), xy(rng), 40};
      const UavPosition mid{(a.x + b.x) / 2, (a.y + b.y) / 2, 40};
      const double lhs = gain_margin(mid, v, r, g);
      const double rhs = 0.5 * (gain_margin(a, v, r, g) + gain_margin(b, v, r, g));
      EXPECT_GE(lhs, rhs - 1e-9 * std::abs(rhs));
    }
  }
}

TEST(Feasibility, StationaryAtHoverPointIsClean) {
  Scenario s = small_scenario(8, 4);
  const GroundPoint hover = optimal_hover_point(s.users[0], s.targets[0], s.radio, s.array, 40.0);
  Trajectory t = make_trajectory(s, std::vector<GroundPoint>(8, hover));
  t.start = t.finish = hover;
  Plan p(2, 1, 8);
  for (int n = 0; n < 8; ++n) p.alpha(0, n) = 1.0;
  p.e[0](0, 1) = p.e[0](0, 5) = 1.0;
  EXPECT_TRUE(check_trajectory_feasibility(t, p, s).empty());
}

TEST(Feasibility, SpeedViolationIndex) {
  Scenario s = small_scenario(4, 4);
  s.targets.clear();
  Trajectory t = make_trajectory(s, {{0, 0}, {5, 0}, {15, 0}, {20, 0}});
  const auto v = check_trajectory_feasibility(t, Plan(2, 0, 4), s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, traj_rules::kSpeed);
  EXPECT_EQ(v[0].slot, 2);
  EXPECT_NEAR(v[0].amount, 2.5, 1e-12);
}

TEST(Feasibility, OutOfReachSensingSlot) {
  Scenario s = small_scenario(2, 2);
  Trajectory t = make_trajectory(s, {{300, 0}, {300, 0}});
  Plan p(2, 1, 2);
  p.alpha(0, 0) = p.alpha(0, 1) = 1.0;
  p.e[0](0, 0) = 1.0;
  const auto v = check_trajectory_feasibility(t, p, s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, traj_rules::kReach);
  EXPECT_EQ(v[0].slot, 0);
}

TEST(TrajectorySubproblem, SingleSlotMovesTowardUser) {
  Scenario s = small_scenario(1, 1);
  s.targets.clear();
  s.users = {{100.0, 50.0}};
  s.qos = {0.0};
  Trajectory t = make_trajectory(s, {{-200.0, -100.0}});
  Plan p(1, 0, 1);
  p.alpha(0, 0) = 1.0;
  double last = horizontal_distance(t.points[0], s.users[0]);
  for (int round = 0; round < 20; ++round) {
    t = solve_trajectory_subproblem(t, p, s, 50.0).trajectory;
    const double d = horizontal_distance(t.points[0], s.users[0]);
    EXPECT_LE(d, last + 1e-7);
    last = d;
  }
  EXPECT_LT(last, 1e-3);
}

TEST(TrajectorySubproblem, ZeroSpeedKeepsPath) {
  Scenario s = small_scenario(4, 4);
  s.v_max = 0.0;
  Trajectory t = make_trajectory(s, std::vector<GroundPoint>(4, {10.0, 10.0}));
  t.start = t.finish = GroundPoint{10.0, 10.0};
  Plan p(2, 1, 4);
  p.alpha.row(0).setOnes();
  p.e[0](0, 0) = 1.0;
  const auto out = solve_trajectory_subproblem(t, p, s, 50.0).trajectory;
  for (int n = 0; n < 4; ++n) {
    EXPECT_EQ(out.points[n].x, 10.0);
    EXPECT_EQ(out.points[n].y, 10.0);
  }
}

TEST(TrajectorySubproblem, MonotoneAndTightOnRelaxedPlan) {
  Scenario s = small_scenario(12, 6);
  s.start = GroundPoint{-30.0, 0.0};
  s.finish = GroundPoint{30.0, 0.0};
  s.qos = {0.5, 0.5};
  Trajectory t = straight_line(s);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plan p(2, 1, 12);
  for (int n = 0; n < 12; ++n) {
    const double a = 0.2 + 0.6 * u(rng);
    p.alpha(0, n) = a;
    p.alpha(1, n) = 1 - a;
  }
  p.alpha(0, 2) = std::max(p.alpha(0, 2), 0.3);
  p.alpha(1, 2) = 1 - p.alpha(0, 2);
  p.alpha(1, 3) = std::max(p.alpha(1, 3), 0.7);
  p.alpha(0, 3) = 1 - p.alpha(1, 3);
  p.alpha(0, 8) = p.alpha(1, 8) = 0.5;
  p.e[0](0, 2) = 0.3;
  p.e[0](1, 3) = 0.7;
  p.e[0](0, 8) = 0.5;
  p.e[0](1, 8) = 0.5;
  double last = plan_objective(t, p, s);
  for (int round = 0; round < 8; ++round) {
    const auto step = solve_trajectory_subproblem(t, p, s, 50.0);
    const double now = plan_objective(step.trajectory, p, s);
    EXPECT_GE(now, last - 1e-7);
    EXPECT_GE(now, step.surrogate - 1e-7);
    // Slacks are active: the optimal surrogate equals its value at the
    // actual distances.
    EXPECT_NEAR(surrogate_objective(t, step.trajectory, p, s), step.surrogate,
                1e-6 * std::abs(step.surrogate));
    EXPECT_TRUE(check_trajectory_feasibility(step.trajectory, p, s).empty());
    t = step.trajectory;
    last = now;
  }
}

TEST(TrajectorySubproblem, ToyFixedPointMatchesGrid) {
  // K = J = 1, two slots: slot 0 senses, slot 1 only communicates. The
  // target sits close to the user so the speed limit is slack and the two
  // slots decouple.
  Scenario s;
  s.users = {{0.0, 0.0}};
  s.targets = {{20.0, 10.0}};
  s.radio.gamma_th = 1.2e-4;
  s.frames.n_total = 2;
  s.frames.n_per_frame = 2;
  s.qos = {0.0};
  Trajectory t = make_trajectory(s, {{30.0, -20.0}, {30.0, -20.0}});
  Plan p(1, 1, 2);
  p.alpha.setOnes();
  p.e[0](0, 0) = 1.0;
  for (int round = 0; round < 60; ++round) t = solve_trajectory_subproblem(t, p, s, 50.0).trajectory;
  const double sca = plan_objective(t, p, s);

  auto lb = [&](double x, double y) {
    const UavPosition q{x, y, 40.0};
    if (gain_margin(q, s.targets[0], s.radio, s.array) < 0) return -1.0;
    return rate_lower_bound(q, s.users[0], s.targets[0], s.radio, s.array);
  };
  double best0 = -1.0;
  GroundPoint arg0{};
  for (double x = -40; x <= 60; x += 0.5) {
    for (double y = -40; y <= 50; y += 0.5) {
      const double v = lb(x, y);
      if (v > best0) {
        best0 = v;
        arg0 = {x, y};
      }
    }
  }
  const double best1 = comm_rate({0, 0, 40}, s.users[0], s.radio, s.array);
  ASSERT_LT(horizontal_distance(arg0, s.users[0]), s.max_step());
  const double grid = (best0 + best1) / 2;
  EXPECT_GE(sca, grid - 1e-9);
  // Within one grid cell of the continuous optimum.
  EXPECT_LT(horizontal_distance(t.points[0], arg0), 0.75);
}

TEST(SeekSensingReach, PutsEveryTargetInReachEachFrame) {
  Scenario s = reference_scenario(40.0, 20.0);
  s.targets = {{-100.0, 200.0}, {100.0, -200.0}};
  s.qos.assign(4, 0.0);
  const auto t = seek_sensing_reach(straight_line(s), s, {0, 1});
  ASSERT_TRUE(t.has_value());
  const RateTable r = compute_rates(*t, s);
  for (int l = 0; l < s.frames.frames(); ++l) {
    for (int j = 0; j < 2; ++j) {
      bool reach = false;
      for (int n = s.frames.frame_begin(l); n < s.frames.frame_begin(l + 1); ++n) {
        reach = reach || r.margin(j, n) >= 0;
      }
      EXPECT_TRUE(reach);
    }
  }
  EXPECT_TRUE(check_trajectory_feasibility(*t, Plan(4, 2, s.frames.n_total), s).empty());
}

}  // namespace
