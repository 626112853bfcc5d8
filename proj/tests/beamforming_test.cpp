#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "isac/beamforming.hpp"

namespace {

using namespace isac;

RadioParams default_radio() {
  RadioParams r;
  r.p_max = 0.1;
  r.gamma_th = 6e-5;
  r.noise_power = 1e-10;
  r.beta0 = 1e-3;
  return r;
}

struct Draw {
  UavPosition q;
  GroundPoint u;
  GroundPoint v;
  RadioParams r;
};

// Gamma_th is placed on either side of the branch boundary so that both
// branches are exercised.
Draw random_draw(std::mt19937_64& rng, const ArrayGeometry& g, bool superposed) {
  std::uniform_real_distribution<double> xy(-300.0, 300.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Draw d;
  d.q = {xy(rng), xy(rng), 40.0};
  d.u = {xy(rng), xy(rng)};
  d.v = {xy(rng), xy(rng)};
  d.r = default_radio();
  const double budget = g.antenna_count() * d.r.p_max / sensing_pathloss(d.q, d.v, d.r);
  const double c = channel_correlation(d.q, d.u, d.v, g);
  const double c2 = c * c;
  const double s = 0.02 + 0.96 * unit(rng);
  d.r.gamma_th = superposed ? budget * (c2 + (1 - c2) * s) : budget * c2 * s;
  return d;
}

TEST(OptimalBeamformer, ZeroThresholdIsMrt) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  r.gamma_th = 0.0;
  const UavPosition q{50, 60, 40};
  const GroundPoint u{-100, 20};
  const auto res = optimal_beamformer(q, u, {200, 200}, r, g);
  EXPECT_EQ(res.branch, BeamBranch::Mrt);
  const double expect = r.gamma0() * g.antenna_count() * r.p_max / distance_sq(q, u);
  EXPECT_NEAR(res.user_snr / expect, 1.0, 1e-12);
}

TEST(OptimalBeamformer, CoincidentUserAndTarget) {
  const ArrayGeometry g{4, 4};
  const auto r = default_radio();
  const UavPosition q{50, 60, 40};
  const GroundPoint u{-30, 20};
  const auto res = optimal_beamformer(q, u, u, r, g);
  const double expect = r.gamma0() * g.antenna_count() * r.p_max / distance_sq(q, u);
  EXPECT_NEAR(res.user_snr / expect, 1.0, 1e-12);
  EXPECT_NEAR(optimal_user_snr(q, u, u, r, g) / expect, 1.0, 1e-12);
}

TEST(OptimalBeamformer, InfeasibleBudgetThrows) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  const UavPosition q{0, 0, 40};
  const GroundPoint v{1000, 0};
  EXPECT_THROW(optimal_beamformer(q, {0, 0}, v, r, g), Infeasible);
  EXPECT_THROW(optimal_user_snr(q, {0, 0}, v, r, g), Infeasible);
  EXPECT_THROW(rate_lower_bound(q, {0, 0}, v, r, g), Infeasible);
}

TEST(OptimalBeamformer, ActiveConstraintsInSuperposedBranch) {
  std::mt19937_64 rng(11);
  for (int mx : {2, 4, 8}) {
    const ArrayGeometry g{mx, mx};
    for (int i = 0; i < 300; ++i) {
      const auto d = random_draw(rng, g, true);
      const auto res = optimal_beamformer(d.q, d.u, d.v, d.r, g);
      ASSERT_EQ(res.branch, BeamBranch::Superposed);
      EXPECT_NEAR(res.w.squaredNorm() / d.r.p_max, 1.0, 1e-9);
      const double gain = res.target_gain / sensing_pathloss(d.q, d.v, d.r);
      EXPECT_NEAR(gain / d.r.gamma_th, 1.0, 1e-8);
      EXPECT_NEAR(res.beta_ck / d.r.noise_power / res.user_snr, 1.0, 1e-9);
    }
  }
}

TEST(OptimalBeamformer, MrtBranchMeetsThreshold) {
  std::mt19937_64 rng(12);
  const ArrayGeometry g{4, 4};
  for (int i = 0; i < 300; ++i) {
    const auto d = random_draw(rng, g, false);
    const auto res = optimal_beamformer(d.q, d.u, d.v, d.r, g);
    ASSERT_EQ(res.branch, BeamBranch::Mrt);
    EXPECT_NEAR(res.w.squaredNorm() / d.r.p_max, 1.0, 1e-12);
    EXPECT_GE(res.target_gain / sensing_pathloss(d.q, d.v, d.r), d.r.gamma_th * (1 - 1e-12));
  }
}

TEST(OptimalBeamformer, SnrFormulaMatchesPluggedBeam) {
  std::mt19937_64 rng(13);
  for (int mx : {2, 4, 8}) {
    const ArrayGeometry g{mx, mx};
    for (int i = 0; i < 1000; ++i) {
      const auto d = random_draw(rng, g, i % 2 == 0);
      const auto res = optimal_beamformer(d.q, d.u, d.v, d.r, g);
      const auto hc = channel_vector(d.q, d.u, d.r.beta0, g);
      const double plugged = std::norm(hc.dot(res.w)) / d.r.noise_power;
      const double formula = optimal_user_snr(d.q, d.u, d.v, d.r, g);
      ASSERT_NEAR(formula / plugged, 1.0, 1e-9);
    }
  }
}

TEST(OptimalBeamformer, MatchesSearchOracle) {
  std::mt19937_64 rng(14);
  for (int mx : {2, 4}) {
    const ArrayGeometry g{mx, mx};
    for (int i = 0; i < 60; ++i) {
      const auto d = random_draw(rng, g, i % 3 != 0);
      const auto closed = optimal_beamformer(d.q, d.u, d.v, d.r, g);
      const auto oracle = oracle_beamformer(d.q, d.u, d.v, d.r, g, 0.05);
      EXPECT_NEAR(oracle.w.squaredNorm() / d.r.p_max, 1.0, 1e-12);
      const double rel = (oracle.beta_ck - closed.beta_ck) / closed.beta_ck;
      EXPECT_LE(rel, 1e-6);
      EXPECT_GE(rel, -1e-6);
    }
  }
}

TEST(OracleBeamformer, ZeroThresholdRecoversMrt) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  r.gamma_th = 0.0;
  const UavPosition q{10, -80, 40};
  const GroundPoint u{90, 15};
  const auto oracle = oracle_beamformer(q, u, {-50, 40}, r, g, 0.05);
  const auto mrt = mrt_beamformer(q, u, r, g);
  EXPECT_NEAR(oracle.beta_ck / mrt.beta_ck, 1.0, 1e-9);
}

TEST(OptimalUserSnr, BranchContinuity) {
  // Put Gamma_th exactly on the boundary M P cos^2 / d^p and step across it.
  std::mt19937_64 rng(15);
  const ArrayGeometry g{4, 4};
  for (int i = 0; i < 500; ++i) {
    auto d = random_draw(rng, g, true);
    const double budget = g.antenna_count() * d.r.p_max / sensing_pathloss(d.q, d.v, d.r);
    const double c = channel_correlation(d.q, d.u, d.v, g);
    if (c < 1e-3) continue;
    d.r.gamma_th = budget * c * c;
    const double mrt = optimal_user_snr(d.q, d.u, d.v, d.r, g);
    const double sup = superposed_user_snr(d.q, d.u, d.v, d.r, g);
    EXPECT_NEAR(sup / mrt, 1.0, 1e-8);
  }
}

TEST(OptimalUserSnr, OrthogonalChannelsGiveBudgetForm) {
  const ArrayGeometry g{4, 4};
  const auto r = default_radio();
  const double dist2 = 60.0 * 60.0;
  for (double du2 : {1600.0, 5000.0}) {
    const double snr = detail::user_snr_from_correlation(0.0, du2, dist2, r, g.antenna_count());
    const double expect = r.gamma0() * (g.antenna_count() * r.p_max - r.gamma_th * dist2) / du2;
    EXPECT_NEAR(snr / expect, 1.0, 1e-12);
  }
  EXPECT_THROW(detail::user_snr_from_correlation(0.0, 1600.0, 1e6, r, 16), Infeasible);
}

TEST(OptimalUserSnr, NonIncreasingInThreshold) {
  std::mt19937_64 rng(16);
  const ArrayGeometry g{4, 4};
  for (int i = 0; i < 200; ++i) {
    auto d = random_draw(rng, g, true);
    const double top = g.antenna_count() * d.r.p_max / sensing_pathloss(d.q, d.v, d.r);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 20; ++k) {
      d.r.gamma_th = top * k / 20.0;
      const double snr = optimal_user_snr(d.q, d.u, d.v, d.r, g);
      EXPECT_LE(snr, prev * (1 + 1e-12));
      prev = snr;
    }
  }
}

TEST(SlotRate, Examples) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  const UavPosition q{0, 0, 40};
  const GroundPoint u{30, 0};
  // Scale beta0 so gamma0 M P / d^2 = 1.
  r.beta0 = r.noise_power * distance_sq(q, u) / (g.antenna_count() * r.p_max);
  EXPECT_NEAR(slot_rate(q, u, std::nullopt, r, g), 1.0, 1e-14);
  r = default_radio();
  EXPECT_NEAR(slot_rate(q, u, u, r, g), slot_rate(q, u, std::nullopt, r, g), 1e-12);
}

TEST(RateLowerBound, NeverAboveExactRate) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> xy(-300.0, 300.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ArrayGeometry g{4, 4};
  int checked = 0;
  while (checked < 10000) {
    RadioParams r = default_radio();
    const UavPosition q{xy(rng), xy(rng), 40.0};
    const GroundPoint u{xy(rng), xy(rng)};
    const GroundPoint v{xy(rng), xy(rng)};
    r.gamma_th = unit(rng) * g.antenna_count() * r.p_max / sensing_pathloss(q, v, r);
    const double lb = rate_lower_bound(q, u, v, r, g);
    const double exact = slot_rate(q, u, v, r, g);
    ASSERT_LE(lb, exact * (1 + 1e-12) + 1e-15);
    ++checked;
  }
}

TEST(RateLowerBound, ZeroThresholdAndOrthogonalEquality) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  r.gamma_th = 0.0;
  const UavPosition q{10, 20, 40};
  const GroundPoint u{-60, 20};
  const GroundPoint v{80, -90};
  EXPECT_NEAR(rate_lower_bound(q, u, v, r, g), comm_rate(q, u, r, g), 1e-12);

  // Orthogonal steering vectors: exact rate equals the bound.
  r = default_radio();
  const double h = 40.0;
  auto offset_for = [h](double phi) { return -phi * h / std::sqrt(1 - phi * phi); };
  const UavPosition q0{0, 0, h};
  const GroundPoint uo{offset_for(0.05), 0.0};
  const GroundPoint vo{offset_for(0.55), 0.0};
  ASSERT_NEAR(channel_correlation(q0, uo, vo, g), 0.0, 1e-12);
  EXPECT_NEAR(rate_lower_bound(q0, uo, vo, r, g), slot_rate(q0, uo, vo, r, g), 1e-9);
}

TEST(AsymptoticSnr, Branches) {
  const ArrayGeometry g{4, 4};
  const auto r = default_radio();
  const UavPosition q{10, 20, 40};
  const GroundPoint u{-60, 20};
  const double mp = g.antenna_count() * r.p_max;
  EXPECT_NEAR(asymptotic_snr(q, u, u, r, g) / (r.gamma0() * mp / distance_sq(q, u)), 1.0, 1e-14);
  const GroundPoint v{15, 30};
  const double forced = detail::user_snr_from_correlation(
      0.0, distance_sq(q, u), sensing_pathloss(q, v, r), r, g.antenna_count());
  EXPECT_NEAR(asymptotic_snr(q, u, v, r, g) / forced, 1.0, 1e-12);
}

TEST(OptimalHoverPoint, ZeroZGivesAltitude) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  const GroundPoint u{0, 0};
  const GroundPoint v{120, 0};
  const double dist = 120.0;
  r.gamma_th = g.antenna_count() * r.p_max / (dist * dist);  // Z = 0
  const auto p = optimal_hover_point(u, v, r, g, 40.0);
  EXPECT_NEAR(p.x, 40.0, 1e-9);
  EXPECT_NEAR(p.y, 0.0, 1e-12);
}

TEST(OptimalHoverPoint, QuadraticResidualAndGridMaximum) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> xy(-200.0, 200.0);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  const ArrayGeometry g{4, 4};
  const double h = 40.0;
  for (int i = 0; i < 50; ++i) {
    auto r = default_radio();
    const GroundPoint u{xy(rng), xy(rng)};
    const GroundPoint v{xy(rng), xy(rng)};
    const double dist = horizontal_distance(u, v);
    const double mp = g.antenna_count() * r.p_max;
    r.gamma_th = unit(rng) * mp / (h * h + dist * dist);  // target sensable along whole segment
    const auto p = optimal_hover_point(u, v, r, g, h);
    const double x = horizontal_distance(u, p);
    const double z = mp / (r.gamma_th * dist) - dist;
    EXPECT_LE(std::abs(x * x + z * x - h * h), 1e-9 * (x * x + h * h));

    auto value = [&](double s) {
      const GroundPoint pt{u.x + s / dist * (v.x - u.x), u.y + s / dist * (v.y - u.y)};
      return asymptotic_snr(at_altitude(pt, h), u, v, r, g);
    };
    double best = -1, best_s = 0;
    const int grid = 10000;
    for (int k = 0; k <= grid; ++k) {
      const double s = dist * k / grid;
      if (value(s) > best) {
        best = value(s);
        best_s = s;
      }
    }
    EXPECT_LE(std::abs(best_s - x), dist / grid + 1e-9);
  }
}

TEST(OptimalHoverPoint, CoincidentReturnsUser) {
  const ArrayGeometry g{4, 4};
  const auto r = default_radio();
  const auto p = optimal_hover_point({3, 4}, {3, 4}, r, g, 40.0);
  EXPECT_DOUBLE_EQ(p.x, 3.0);
  EXPECT_DOUBLE_EQ(p.y, 4.0);
}

TEST(OptimalHoverPoint, FourthPowerMaximizesOnGrid) {
  const ArrayGeometry g{4, 4};
  auto r = default_radio();
  r.pathloss_exponent_sensing = 4;
  const double h = 40.0;
  const GroundPoint u{0, 0};
  const GroundPoint v{100, 50};
  const double dist = horizontal_distance(u, v);
  const double mp = g.antenna_count() * r.p_max;
  const double dv2 = h * h + dist * dist;
  r.gamma_th = 0.5 * mp / (dv2 * dv2);
  const auto p = optimal_hover_point(u, v, r, g, h);
  const double x = horizontal_distance(u, p);
  double best = -1, best_s = 0;
  for (int k = 0; k <= 10000; ++k) {
    const double s = dist * k / 10000;
    const GroundPoint pt{s / dist * v.x, s / dist * v.y};
    const double val = asymptotic_snr(at_altitude(pt, h), u, v, r, g);
    if (val > best) {
      best = val;
      best_s = s;
    }
  }
  EXPECT_LE(std::abs(best_s - x), dist / 10000 + 1e-9);
}

}  // namespace
