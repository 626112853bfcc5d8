#pragma once

// Scenario files, CSV exports and parameter sweeps.

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "isac/optimizer.hpp"

namespace isac {

namespace detail {

using json = nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline void reject_unknown(const json& j, const std::string& path,
                           std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ParseError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParseError(join_path(path, key), "unknown field");
  }
}

inline double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(path, "expected a finite number");
  return v;
}

inline int integer_at(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<int>();
}

inline GroundPoint point_at(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ParseError(path, "expected [x, y]");
  return {number_at(j[0], path + "[0]"), number_at(j[1], path + "[1]")};
}

inline std::vector<GroundPoint> points_at(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected a list of [x, y]");
  std::vector<GroundPoint> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(point_at(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

/// Reads `key` (linear) or `key_db` (10 log10 of it) into `out` if present.
inline void linear_or_db(const json& j, const std::string& path, const std::string& key,
                         double& out) {
  const bool lin = j.contains(key);
  const bool db = j.contains(key + "_db");
  if (lin && db) throw ParseError(join_path(path, key), "give either the linear or the _db form");
  if (lin) out = number_at(j[key], join_path(path, key));
  if (db) out = std::pow(10.0, number_at(j[key + "_db"], join_path(path, key + "_db")) / 10.0);
}

/// Whole number of `unit` in `total`, or -1.
inline int whole_multiple(double total, double unit) {
  if (!(unit > 0) || !(total > 0)) return -1;
  const double r = total / unit;
  const double n = std::round(r);
  return std::abs(r - n) <= 1e-9 * std::max(1.0, r) ? static_cast<int>(n) : -1;
}

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace detail

/// Defaults used when a scenario file leaves a field out.
struct ScenarioDefaults {
  double horizon_s = 80.0;
  double frame_s = 20.0;
  double slot_s = 0.25;
  double qos = 0.25;
};

/// Builds a validated scenario from a JSON document. Unit suffixes are part
/// of the field names; gains and powers also accept a `_db` form.
inline Scenario parse_scenario(const nlohmann::json& j, const ScenarioDefaults& d = {}) {
  using detail::json;
  detail::reject_unknown(
      j, "",
      {"area_m", "users_m", "targets_m", "altitude_m", "v_max_mps", "start_m", "finish_m",
       "p_max_w", "p_max_w_db", "gamma_th", "gamma_th_db", "noise_power_w", "noise_power_w_db",
       "beta0", "beta0_db", "pathloss_exponent_sensing", "array", "horizon_s", "frame_s",
       "slot_s", "qos_bps_hz", "penalty", "seed"});
  Scenario s;
  if (j.contains("area_m")) {
    const auto& a = j["area_m"];
    detail::reject_unknown(a, "area_m", {"x_min", "x_max", "y_min", "y_max"});
    if (a.contains("x_min")) s.area.x_min = detail::number_at(a["x_min"], "area_m.x_min");
    if (a.contains("x_max")) s.area.x_max = detail::number_at(a["x_max"], "area_m.x_max");
    if (a.contains("y_min")) s.area.y_min = detail::number_at(a["y_min"], "area_m.y_min");
    if (a.contains("y_max")) s.area.y_max = detail::number_at(a["y_max"], "area_m.y_max");
  }
  if (!j.contains("users_m")) throw ParseError("users_m", "required field is missing");
  s.users = detail::points_at(j["users_m"], "users_m");
  if (j.contains("targets_m")) s.targets = detail::points_at(j["targets_m"], "targets_m");
  if (j.contains("altitude_m")) s.altitude = detail::number_at(j["altitude_m"], "altitude_m");
  if (j.contains("v_max_mps")) s.v_max = detail::number_at(j["v_max_mps"], "v_max_mps");
  if (j.contains("start_m")) s.start = detail::point_at(j["start_m"], "start_m");
  if (j.contains("finish_m")) s.finish = detail::point_at(j["finish_m"], "finish_m");

  detail::linear_or_db(j, "", "p_max_w", s.radio.p_max);
  detail::linear_or_db(j, "", "gamma_th", s.radio.gamma_th);
  detail::linear_or_db(j, "", "noise_power_w", s.radio.noise_power);
  detail::linear_or_db(j, "", "beta0", s.radio.beta0);
  if (j.contains("pathloss_exponent_sensing")) {
    s.radio.pathloss_exponent_sensing =
        detail::integer_at(j["pathloss_exponent_sensing"], "pathloss_exponent_sensing");
  }
  if (j.contains("array")) {
    const auto& a = j["array"];
    detail::reject_unknown(a, "array", {"m_x", "m_y", "element_spacing_wavelengths", "wavelength_m"});
    if (a.contains("m_x")) s.array.m_x = detail::integer_at(a["m_x"], "array.m_x");
    if (a.contains("m_y")) s.array.m_y = detail::integer_at(a["m_y"], "array.m_y");
    if (a.contains("element_spacing_wavelengths")) {
      s.array.element_spacing_wavelengths =
          detail::number_at(a["element_spacing_wavelengths"], "array.element_spacing_wavelengths");
    }
    if (a.contains("wavelength_m")) {
      s.array.wavelength_m = detail::number_at(a["wavelength_m"], "array.wavelength_m");
    }
  }

  const double horizon = j.contains("horizon_s") ? detail::number_at(j["horizon_s"], "horizon_s")
                                                 : d.horizon_s;
  const double frame = j.contains("frame_s") ? detail::number_at(j["frame_s"], "frame_s") : d.frame_s;
  const double slot = j.contains("slot_s") ? detail::number_at(j["slot_s"], "slot_s") : d.slot_s;

  s.qos.assign(s.users.size(), d.qos);
  if (j.contains("qos_bps_hz")) {
    const auto& q = j["qos_bps_hz"];
    if (q.is_array()) {
      if (q.size() != s.users.size()) {
        throw ParseError("qos_bps_hz", "expected one entry per user");
      }
      for (std::size_t k = 0; k < q.size(); ++k) {
        s.qos[k] = detail::number_at(q[k], "qos_bps_hz[" + std::to_string(k) + "]");
      }
    } else {
      s.qos.assign(s.users.size(), detail::number_at(q, "qos_bps_hz"));
    }
  }

  if (j.contains("penalty")) {
    const auto& p = j["penalty"];
    detail::reject_unknown(p, "penalty", {"eta0", "scale_z", "xi", "eps_inner", "max_outer",
                                          "max_inner", "restarts", "trust_radius_m"});
    auto& c = s.penalty;
    if (p.contains("eta0")) c.eta0 = detail::number_at(p["eta0"], "penalty.eta0");
    if (p.contains("scale_z")) c.scale_z = detail::number_at(p["scale_z"], "penalty.scale_z");
    if (p.contains("xi")) c.xi = detail::number_at(p["xi"], "penalty.xi");
    if (p.contains("eps_inner")) c.eps_inner = detail::number_at(p["eps_inner"], "penalty.eps_inner");
    if (p.contains("max_outer")) c.max_outer = detail::integer_at(p["max_outer"], "penalty.max_outer");
    if (p.contains("max_inner")) c.max_inner = detail::integer_at(p["max_inner"], "penalty.max_inner");
    if (p.contains("restarts")) c.restarts = detail::integer_at(p["restarts"], "penalty.restarts");
    if (p.contains("trust_radius_m")) {
      c.trust_radius = detail::number_at(p["trust_radius_m"], "penalty.trust_radius_m");
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      throw ParseError("seed", "expected a non-negative integer");
    }
    if (j["seed"].is_number_integer() && j["seed"].get<long long>() < 0) {
      throw ParseError("seed", "expected a non-negative integer");
    }
    s.seed = j["seed"].get<std::uint64_t>();
  }

  std::vector<std::string> problems;
  const int n_total = detail::whole_multiple(horizon, slot);
  const int n_frame = detail::whole_multiple(frame, slot);
  if (n_total < 1) problems.push_back("horizon_s must be a positive whole number of slots");
  if (n_frame < 1) problems.push_back("frame_s must be a positive whole number of slots");
  if (n_total >= 1 && n_frame >= 1 && detail::whole_multiple(horizon, frame) < 1) {
    problems.push_back("horizon_s / frame_s must be an integer number of frames");
  }
  s.frames.slot_seconds = slot;
  s.frames.n_total = std::max(n_total, 1);
  s.frames.n_per_frame = std::max(n_frame, 1);
  if (problems.empty()) {
    s.validate();
  } else {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    try {
      s.validate();
    } catch (const ValidationError& ex) {
      msg += std::string("; ") + ex.what();
    }
    throw ValidationError(msg);
  }
  return s;
}

inline Scenario load_scenario(const std::string& path, const ScenarioDefaults& d = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(path, ex.what());
  }
  return parse_scenario(j, d);
}

/// JSON form of a scenario in linear units; parse_scenario reads it back.
inline nlohmann::json scenario_to_json(const Scenario& s) {
  using nlohmann::json;
  auto pts = [](const std::vector<GroundPoint>& v) {
    json a = json::array();
    for (const auto& p : v) a.push_back({p.x, p.y});
    return a;
  };
  json j;
  j["area_m"] = {{"x_min", s.area.x_min}, {"x_max", s.area.x_max},
                 {"y_min", s.area.y_min}, {"y_max", s.area.y_max}};
  j["users_m"] = pts(s.users);
  j["targets_m"] = pts(s.targets);
  j["altitude_m"] = s.altitude;
  j["v_max_mps"] = s.v_max;
  if (s.start) j["start_m"] = {s.start->x, s.start->y};
  if (s.finish) j["finish_m"] = {s.finish->x, s.finish->y};
  j["p_max_w"] = s.radio.p_max;
  j["gamma_th"] = s.radio.gamma_th;
  j["noise_power_w"] = s.radio.noise_power;
  j["beta0"] = s.radio.beta0;
  j["pathloss_exponent_sensing"] = s.radio.pathloss_exponent_sensing;
  j["array"] = {{"m_x", s.array.m_x}, {"m_y", s.array.m_y},
                {"element_spacing_wavelengths", s.array.element_spacing_wavelengths},
                {"wavelength_m", s.array.wavelength_m}};
  j["horizon_s"] = s.frames.horizon_seconds();
  j["frame_s"] = s.frames.n_per_frame * s.frames.slot_seconds;
  j["slot_s"] = s.frames.slot_seconds;
  j["qos_bps_hz"] = s.qos;
  const auto& c = s.penalty;
  j["penalty"] = {{"eta0", c.eta0},           {"scale_z", c.scale_z},
                  {"xi", c.xi},               {"eps_inner", c.eps_inner},
                  {"max_outer", c.max_outer}, {"max_inner", c.max_inner},
                  {"restarts", c.restarts},   {"trust_radius_m", c.trust_radius}};
  j["seed"] = s.seed;
  return j;
}

/// slot, t, x, y, served_user, sensed_target, rate_exact, rate_lb. Indices
/// are 0-based, -1 marks an idle slot or a slot without sensing. Throws if a
/// row breaks the speed limit.
inline void write_trajectory_csv(std::ostream& os, const SolveReport& r, const Scenario& s) {
  const auto& pts = r.trajectory.points;
  const double step = s.max_step();
  os << "slot,t,x,y,served_user,sensed_target,rate_exact,rate_lb\n";
  for (int n = 0; n < r.trajectory.slots(); ++n) {
    if (n > 0 && horizontal_distance(pts[n], pts[n - 1]) > step * (1 + 1e-9) + 1e-9) {
      throw Infeasible("trajectory row " + std::to_string(n) + " exceeds the speed limit");
    }
    os << n << ',' << detail::fmt_num(n * s.frames.slot_seconds) << ','
       << detail::fmt_num(pts[n].x) << ',' << detail::fmt_num(pts[n].y) << ','
       << r.plan.served_user(n) << ',' << r.plan.sensed_target(n) << ','
       << detail::fmt_num(r.slot_rates[n]) << ',' << detail::fmt_num(r.slot_rates_lb[n]) << '\n';
  }
}

/// Beam-pattern gain |a(phi, omega)^H w|^2 of slot n's beam over a square
/// grid of direction cosines, restricted to the visible region.
inline void write_beampattern_csv(std::ostream& os, const SolveReport& r, const Scenario& s,
                                  int slot, int grid = 101) {
  if (slot < 0 || slot >= static_cast<int>(r.beams.size())) {
    throw std::out_of_range("slot " + std::to_string(slot) + " is outside the horizon");
  }
  if (grid < 2) throw std::invalid_argument("beam-pattern grid needs at least 2 points");
  const ComplexVector& w = r.beams[slot];
  os << "phi_cos,omega_cos,gain\n";
  for (int a = 0; a < grid; ++a) {
    const double phi = -1.0 + 2.0 * a / (grid - 1);
    for (int b = 0; b < grid; ++b) {
      const double omega = -1.0 + 2.0 * b / (grid - 1);
      if (phi * phi + omega * omega > 1.0 + 1e-12) continue;
      os << detail::fmt_num(phi) << ',' << detail::fmt_num(omega) << ','
         << detail::fmt_num(beam_pattern_gain(w, s.array, DirectionCosines{phi, omega})) << '\n';
    }
  }
}

enum class Planner { Proposed, LowComplexity, StraightFlight, FlyHoverFly };
enum class SweepKind { Gamma, Frequency, Horizon, Antennas };

inline SolveReport run_planner(Planner p, const Scenario& s, const PenaltyConfig& cfg) {
  switch (p) {
    case Planner::Proposed:
      return solve_p1(s, cfg);
    case Planner::LowComplexity:
      return solve_low_complexity(s, cfg);
    case Planner::StraightFlight:
      return benchmark(BenchmarkKind::StraightFlight, s, cfg);
    case Planner::FlyHoverFly:
      return benchmark(BenchmarkKind::FlyHoverFly, s, cfg);
  }
  throw std::invalid_argument("unknown planner");
}

/// Default parameter values: Gamma^th (linear), T_L (s), T (s), M (square
/// arrays).
inline std::vector<double> default_sweep_values(SweepKind k) {
  switch (k) {
    case SweepKind::Gamma:
      return {0.0, 2e-5, 6e-5, 12e-5};
    case SweepKind::Frequency:
      return {40.0, 20.0, 10.0, 5.0};
    case SweepKind::Horizon:
      return {40.0, 80.0, 120.0, 160.0, 200.0};
    case SweepKind::Antennas:
      return {4.0, 16.0, 36.0, 64.0};
  }
  return {};
}

/// Copy of `base` with the swept parameter set. Throws ValidationError when
/// the value does not give a valid scenario (e.g. T not a multiple of T_L).
inline Scenario apply_sweep_value(const Scenario& base, SweepKind k, double v) {
  Scenario s = base;
  const double slot = s.frames.slot_seconds;
  switch (k) {
    case SweepKind::Gamma:
      s.radio.gamma_th = v;
      break;
    case SweepKind::Frequency: {
      const int n = detail::whole_multiple(v, slot);
      if (n < 1) throw ValidationError("frame length is not a whole number of slots");
      s.frames.n_per_frame = n;
      break;
    }
    case SweepKind::Horizon: {
      const int n = detail::whole_multiple(v, slot);
      if (n < 1) throw ValidationError("horizon is not a whole number of slots");
      s.frames.n_total = n;
      break;
    }
    case SweepKind::Antennas: {
      const int m = static_cast<int>(std::lround(std::sqrt(v)));
      if (m < 1 || m * m != static_cast<int>(std::lround(v))) {
        throw ValidationError("antenna count must be a perfect square");
      }
      s.array.m_x = s.array.m_y = m;
      break;
    }
  }
  s.validate();
  return s;
}

struct SweepPoint {
  double param = 0.0;
  double mean_rate = std::numeric_limits<double>::quiet_NaN();
  std::string status;
  std::string message;  // error text when no report was produced
  std::optional<SolveReport> report;
};

/// Status word of a finished report.
inline std::string report_status(const SolveReport& r) {
  return r.converged ? "converged" : "not_converged";
}

/// Solves one scenario per value on `workers` threads. Results keep the order
/// of `values`; failures are recorded in the status column.
inline std::vector<SweepPoint> run_sweep(
    SweepKind kind, const Scenario& base, const std::vector<double>& values, Planner planner,
    const PenaltyConfig& cfg, int workers = 0,
    const std::function<void(const SweepPoint&)>& on_done = {}) {
  std::vector<SweepPoint> out(values.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      SweepPoint& pt = out[i];
      pt.param = values[i];
      try {
        const Scenario s = apply_sweep_value(base, kind, values[i]);
        pt.report = run_planner(planner, s, cfg);
        pt.mean_rate = pt.report->mean_rate;
        pt.status = report_status(*pt.report);
      } catch (const BenchmarkInfeasible& ex) {
        pt.status = "benchmark_infeasible";
        pt.message = ex.what();
      } catch (const Infeasible& ex) {
        pt.status = "infeasible";
        pt.message = ex.what();
      } catch (const ValidationError& ex) {
        pt.status = "invalid";
        pt.message = ex.what();
      } catch (const NonConvergence& ex) {
        pt.status = "not_converged";
        pt.message = ex.what();
      } catch (const std::exception& ex) {
        pt.status = "error";
        pt.message = ex.what();
      }
      if (on_done) {
        std::lock_guard<std::mutex> lock(done_mutex);
        on_done(pt);
      }
    }
  };
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(values.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

/// param, mean_rate, status.
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& pts) {
  os << "param,mean_rate,status\n";
  for (const auto& p : pts) {
    os << detail::fmt_num(p.param) << ',' << detail::fmt_num(p.mean_rate) << ',' << p.status
       << '\n';
  }
}

}  // namespace isac
