#pragma once

// Closed-form ISAC beamformer, optimal user SNR, infinite-array limits, slot
// rates and their lower bound. oracle_beamformer is an independent search
// used to check the closed form.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "isac/errors.hpp"
#include "isac/geometry.hpp"

namespace isac {

struct RadioParams {
  double p_max = 0.1;          // W
  double gamma_th = 6e-5;      // beam-pattern gain threshold (linear)
  double noise_power = 1e-10;  // W
  double beta0 = 1e-3;         // reference channel gain at 1 m
  int pathloss_exponent_sensing = 2;

  double gamma0() const { return beta0 / noise_power; }

  void validate() const {
    if (!(p_max > 0) || !(noise_power > 0) || !(beta0 > 0) || !(gamma_th >= 0)) {
      throw std::invalid_argument("radio parameters must be positive");
    }
    if (pathloss_exponent_sensing != 2 && pathloss_exponent_sensing != 4) {
      throw std::invalid_argument("sensing pathloss exponent must be 2 or 4");
    }
  }
};

/// d(q, v)^p for the configured sensing exponent.
inline double sensing_pathloss(const UavPosition& q, GroundPoint v, const RadioParams& r) {
  const double d2 = distance_sq(q, v);
  return r.pathloss_exponent_sensing == 4 ? d2 * d2 : d2;
}

/// M P_max - d(q,v)^p Gamma_th; nonnegative iff target v can be sensed from q.
inline double gain_margin(const UavPosition& q, GroundPoint v, const RadioParams& r,
                          const ArrayGeometry& g) {
  return g.antenna_count() * r.p_max - sensing_pathloss(q, v, r) * r.gamma_th;
}

enum class BeamBranch { Mrt, Superposed };

struct BeamformerResult {
  ComplexVector w;
  BeamBranch branch = BeamBranch::Mrt;
  double user_snr = 0.0;
  double target_gain = 0.0;  // |a(q,v)^H w|^2
  double cos_phi = 0.0;
  double beta_ck = 0.0;      // |h_c^H w|^2
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double upsilon = 0.0;
};

namespace detail {

inline constexpr double kBranchTolerance = 1e-12;

struct SensingChannels {
  ComplexVector hc;
  ComplexVector hr;
  double hc_norm;
  double hr_norm;
  Complex cross;  // h_c^H h_r
};

inline SensingChannels sensing_channels(const UavPosition& q, GroundPoint u, GroundPoint v,
                                        const RadioParams& r, const ArrayGeometry& g) {
  SensingChannels c;
  c.hc = channel_vector(q, u, r.beta0, g);
  c.hr = steering_vector(g, q, v) / std::sqrt(sensing_pathloss(q, v, r));
  c.hc_norm = c.hc.norm();
  c.hr_norm = c.hr.norm();
  c.cross = c.hc.dot(c.hr);
  return c;
}

inline void require_sensable(double budget, double gamma_th) {
  if (budget < gamma_th * (1.0 - kBranchTolerance)) {
    throw Infeasible("beam-pattern gain threshold unattainable at this UAV position");
  }
}

}  // namespace detail

inline BeamformerResult mrt_beamformer(const UavPosition& q, GroundPoint u,
                                       const RadioParams& r, const ArrayGeometry& g) {
  BeamformerResult res;
  const ComplexVector hc = channel_vector(q, u, r.beta0, g);
  res.w = std::sqrt(r.p_max) * hc / hc.norm();
  res.branch = BeamBranch::Mrt;
  res.beta_ck = r.p_max * hc.squaredNorm();
  res.user_snr = res.beta_ck / r.noise_power;
  res.cos_phi = 1.0;
  return res;
}

/// Optimal single-user beamformer subject to the sensing beam-gain constraint
/// toward v. Throws Infeasible if M P_max / d(q,v)^p < Gamma_th.
inline BeamformerResult optimal_beamformer(const UavPosition& q, GroundPoint u, GroundPoint v,
                                           const RadioParams& r, const ArrayGeometry& g) {
  const auto ch = detail::sensing_channels(q, u, v, r, g);
  const double gth = r.gamma_th;
  const double budget = r.p_max * ch.hr_norm * ch.hr_norm;  // M P / d^p
  detail::require_sensable(budget, gth);

  const double cos_phi = std::min(1.0, std::abs(ch.cross) / (ch.hc_norm * ch.hr_norm));
  const double sin_phi = std::sqrt(std::max(0.0, 1.0 - cos_phi * cos_phi));

  BeamformerResult res;
  res.cos_phi = cos_phi;

  if (budget * cos_phi * cos_phi >= gth * (1.0 - detail::kBranchTolerance)) {
    res.branch = BeamBranch::Mrt;
    res.w = std::sqrt(r.p_max) * ch.hc / ch.hc_norm;
    res.beta_ck = r.p_max * ch.hc_norm * ch.hc_norm;
  } else {
    if (sin_phi < detail::kBranchTolerance) {
      throw Degenerate("superposed branch selected with sin(phi) = 0");
    }
    res.branch = BeamBranch::Superposed;
    const double sqrt_g = std::sqrt(gth);
    const double spare = std::sqrt(std::max(0.0, budget - gth));
    const double upsilon = sqrt_g * cos_phi + spare * sin_phi;
    const double hc2 = ch.hc_norm * ch.hc_norm;
    const double hr2 = ch.hr_norm * ch.hr_norm;
    res.upsilon = upsilon;
    res.beta_ck = hc2 / hr2 * upsilon * upsilon;
    const Complex rotate = std::polar(1.0, -std::arg(ch.cross));
    if (spare > detail::kBranchTolerance * std::sqrt(budget)) {
      res.lambda1 = upsilon * hc2 * sin_phi / spare;
      res.lambda2 = upsilon * hc2 * (sqrt_g * sin_phi - spare * cos_phi) / (spare * hr2 * sqrt_g);
      res.w = (std::sqrt(res.beta_ck) * ch.hc + res.lambda2 * sqrt_g * rotate * ch.hr) /
              res.lambda1;
    } else {
      // Budget exactly exhausted: the whole power goes toward the target.
      res.lambda1 = std::numeric_limits<double>::infinity();
      res.lambda2 = std::numeric_limits<double>::infinity();
      res.w = std::sqrt(r.p_max) * rotate * ch.hr / ch.hr_norm;
      res.beta_ck = std::norm(ch.hc.dot(res.w));
    }
  }
  res.user_snr = std::norm(ch.hc.dot(res.w)) / r.noise_power;
  res.target_gain = beam_pattern_gain(res.w, g, q, v);
  return res;
}

namespace detail {

/// Branch-aware optimum SNR written in terms of the channel correlation.
inline double user_snr_from_correlation(double cos_phi, double du2, double dvp,
                                        const RadioParams& r, int antennas) {
  const double mp = antennas * r.p_max;
  const double budget = mp / dvp;
  require_sensable(budget, r.gamma_th);
  if (budget * cos_phi * cos_phi >= r.gamma_th * (1.0 - kBranchTolerance)) {
    return r.gamma0() * mp / du2;
  }
  const double sin_phi = std::sqrt(std::max(0.0, 1.0 - cos_phi * cos_phi));
  const double amp =
      std::sqrt(r.gamma_th) * cos_phi + std::sqrt(std::max(0.0, budget - r.gamma_th)) * sin_phi;
  return r.gamma0() * dvp / du2 * amp * amp;
}

}  // namespace detail

/// Superposed-branch SNR formula on its own, without the branch test.
inline double superposed_user_snr(const UavPosition& q, GroundPoint u, GroundPoint v,
                                  const RadioParams& r, const ArrayGeometry& g) {
  const double dvp = sensing_pathloss(q, v, r);
  const double radicand = g.antenna_count() * r.p_max / dvp - r.gamma_th;
  if (radicand < 0) throw Infeasible("negative radicand in optimal SNR");
  const double c = channel_correlation(q, u, v, g);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double amp = std::sqrt(r.gamma_th) * c + std::sqrt(radicand) * s;
  return r.gamma0() * dvp / distance_sq(q, u) * amp * amp;
}

/// Optimal user SNR while sensing v (MRT value when the MRT beam already meets
/// the gain threshold).
inline double optimal_user_snr(const UavPosition& q, GroundPoint u, GroundPoint v,
                               const RadioParams& r, const ArrayGeometry& g) {
  return detail::user_snr_from_correlation(channel_correlation(q, u, v, g), distance_sq(q, u),
                                           sensing_pathloss(q, v, r), r, g.antenna_count());
}

/// log2(1 + gamma0 M P_max / d(q,u)^2).
inline double comm_rate(const UavPosition& q, GroundPoint u, const RadioParams& r,
                        const ArrayGeometry& g) {
  return std::log2(1.0 + r.gamma0() * g.antenna_count() * r.p_max / distance_sq(q, u));
}

/// Exact optimal rate in a slot; `target` empty means a communication-only slot.
inline double slot_rate(const UavPosition& q, GroundPoint u, std::optional<GroundPoint> target,
                        const RadioParams& r, const ArrayGeometry& g) {
  if (!target) return comm_rate(q, u, r, g);
  return std::log2(1.0 + optimal_user_snr(q, u, *target, r, g));
}

/// log2(1 + gamma0 (M P_max - d(q,v)^p Gamma_th) / d(q,u)^2).
inline double rate_lower_bound(const UavPosition& q, GroundPoint u, GroundPoint v,
                               const RadioParams& r, const ArrayGeometry& g) {
  const double margin = gain_margin(q, v, r, g);
  if (margin < -detail::kBranchTolerance * g.antenna_count() * r.p_max) {
    throw Infeasible("beam-pattern gain threshold unattainable at this UAV position");
  }
  return std::log2(1.0 + r.gamma0() * std::max(0.0, margin) / distance_sq(q, u));
}

/// Limit of the optimal SNR as M_x, M_y grow (channels become orthogonal
/// unless u and v coincide).
inline double asymptotic_snr(const UavPosition& q, GroundPoint u, GroundPoint v,
                             const RadioParams& r, const ArrayGeometry& g) {
  const double mp = g.antenna_count() * r.p_max;
  const double du2 = distance_sq(q, u);
  if (u == v) return r.gamma0() * mp / du2;
  return r.gamma0() * (mp - r.gamma_th * sensing_pathloss(q, v, r)) / du2;
}

/// Hover point on segment u-v maximizing the asymptotic rate. Closed form for
/// the exponent-2 model; golden-section search for exponent 4.
inline GroundPoint optimal_hover_point(GroundPoint u, GroundPoint v, const RadioParams& r,
                                       const ArrayGeometry& g, double altitude) {
  const double dist = horizontal_distance(u, v);
  if (dist == 0.0) return u;
  const double mp = g.antenna_count() * r.p_max;
  const double h2 = altitude * altitude;
  double x = 0.0;
  if (r.pathloss_exponent_sensing == 2) {
    if (r.gamma_th == 0.0) return u;
    const double z = mp / (r.gamma_th * dist) - dist;
    x = (std::sqrt(z * z + 4.0 * h2) - z) / 2.0;
  } else {
    auto value = [&](double s) {
      const double dv2 = h2 + (dist - s) * (dist - s);
      return (mp - r.gamma_th * dv2 * dv2) / (h2 + s * s);
    };
    double lo = 0.0;
    double hi = dist;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - inv_phi * (hi - lo);
    double b = lo + inv_phi * (hi - lo);
    double fa = value(a);
    double fb = value(b);
    for (int it = 0; it < 200 && hi - lo > 1e-12 * dist; ++it) {
      if (fa < fb) {
        lo = a; a = b; fa = fb;
        b = lo + inv_phi * (hi - lo); fb = value(b);
      } else {
        hi = b; b = a; fb = fa;
        a = hi - inv_phi * (hi - lo); fa = value(a);
      }
    }
    x = 0.5 * (lo + hi);
  }
  const double t = x / dist;
  return {u.x + t * (v.x - u.x), u.y + t * (v.y - u.y)};
}

/// Brute-force search for the sensing-constrained beamformer over the
/// span{h_c, h_r} family w ~ cos(t) h_c/|h_c| + sin(t) e^{j theta} h_r/|h_r|,
/// scaled to full power. `resolution` is the coarse grid spacing in radians;
/// the best cell is then refined by bisection on the constraint boundary and
/// golden-section search in theta.
inline BeamformerResult oracle_beamformer(const UavPosition& q, GroundPoint u, GroundPoint v,
                                          const RadioParams& r, const ArrayGeometry& g,
                                          double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be > 0");
  const ComplexVector hc = channel_vector(q, u, r.beta0, g);
  const ComplexVector hr = steering_vector(g, q, v) / std::sqrt(sensing_pathloss(q, v, r));
  detail::require_sensable(r.p_max * hr.squaredNorm(), r.gamma_th);
  const ComplexVector uc = hc / hc.norm();
  const ComplexVector ur = hr / hr.norm();
  const double gth = r.gamma_th;

  auto beam = [&](double t, double theta) {
    ComplexVector w = std::cos(t) * uc + std::sin(t) * std::polar(1.0, theta) * ur;
    return ComplexVector(std::sqrt(r.p_max) * w / w.norm());
  };
  auto objective = [&](const ComplexVector& w) { return std::norm(hc.dot(w)); };
  auto slack = [&](const ComplexVector& w) { return std::norm(hr.dot(w)) - gth; };

  // Best feasible t for a fixed theta.
  const int nt = std::max(16, static_cast<int>(std::ceil(std::numbers::pi / 2 / resolution)));
  auto best_over_t = [&](double theta, double* t_best) {
    double best = -1.0;
    auto consider = [&](double t) {
      const ComplexVector w = beam(t, theta);
      if (slack(w) >= -1e-14 * gth) {
        const double f = objective(w);
        if (f > best) {
          best = f;
          *t_best = t;
        }
      }
    };
    double prev_t = 0.0;
    double prev_s = slack(beam(0.0, theta));
    consider(0.0);
    for (int i = 1; i <= nt; ++i) {
      const double t = (std::numbers::pi / 2) * i / nt;
      const double s = slack(beam(t, theta));
      consider(t);
      if ((prev_s < 0) != (s < 0)) {
        double lo = prev_t, hi = t;
        const bool lo_feasible = prev_s >= 0;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
          const double mid = 0.5 * (lo + hi);
          const bool feas = slack(beam(mid, theta)) >= 0;
          (feas == lo_feasible ? lo : hi) = mid;
        }
        consider(lo_feasible ? lo : hi);
      }
      prev_t = t;
      prev_s = s;
    }
    // Interior maximum (MRT-like) refined by golden section around the best t.
    const double step = (std::numbers::pi / 2) / nt;
    double lo = std::max(0.0, *t_best - step);
    double hi = std::min(std::numbers::pi / 2, *t_best + step);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
      const double a = hi - inv_phi * (hi - lo);
      const double b = lo + inv_phi * (hi - lo);
      const ComplexVector wa = beam(a, theta);
      const ComplexVector wb = beam(b, theta);
      const double fa = slack(wa) >= 0 ? objective(wa) : -1.0;
      const double fb = slack(wb) >= 0 ? objective(wb) : -1.0;
      if (fa < fb) lo = a; else hi = b;
    }
    consider(0.5 * (lo + hi));
    return best;
  };

  const int ntheta = std::max(16, static_cast<int>(std::ceil(2 * std::numbers::pi / resolution)));
  double best = -1.0;
  double best_theta = 0.0;
  double best_t = 0.0;
  for (int i = 0; i < ntheta; ++i) {
    const double theta = 2 * std::numbers::pi * i / ntheta;
    double t = 0.0;
    const double f = best_over_t(theta, &t);
    if (f > best) {
      best = f;
      best_theta = theta;
      best_t = t;
    }
  }
  if (best < 0) throw Infeasible("oracle found no feasible beam");
  {
    const double step = 2 * std::numbers::pi / ntheta;
    double lo = best_theta - step;
    double hi = best_theta + step;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100 && hi - lo > 1e-14; ++it) {
      const double a = hi - inv_phi * (hi - lo);
      const double b = lo + inv_phi * (hi - lo);
      double ta = 0.0, tb = 0.0;
      if (best_over_t(a, &ta) < best_over_t(b, &tb)) lo = a; else hi = b;
    }
    const double theta = 0.5 * (lo + hi);
    double t = 0.0;
    const double f = best_over_t(theta, &t);
    if (f > best) {
      best = f;
      best_theta = theta;
      best_t = t;
    }
  }

  BeamformerResult res;
  res.w = beam(best_t, best_theta);
  res.beta_ck = objective(res.w);
  res.user_snr = res.beta_ck / r.noise_power;
  res.target_gain = beam_pattern_gain(res.w, g, q, v);
  res.cos_phi = std::abs(uc.dot(ur));
  res.branch = slack(res.w) > 1e-9 * std::max(gth, 1e-300) ? BeamBranch::Mrt
                                                            : BeamBranch::Superposed;
  return res;
}

}  // namespace isac
