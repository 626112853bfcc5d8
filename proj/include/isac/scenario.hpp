#pragma once

// Mission description shared by the trajectory, optimizer and harness layers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "isac/beamforming.hpp"
#include "isac/errors.hpp"
#include "isac/geometry.hpp"
#include "isac/schedule.hpp"

namespace isac {

struct Area {
  double x_min = -500.0;
  double x_max = 500.0;
  double y_min = -500.0;
  double y_max = 500.0;

  bool contains(GroundPoint p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
};

struct Scenario {
  Area area;
  std::vector<GroundPoint> users;
  std::vector<GroundPoint> targets;
  RadioParams radio;
  ArrayGeometry array;
  FramePlan frames;
  double altitude = 40.0;
  double v_max = 30.0;
  std::optional<GroundPoint> start;
  std::optional<GroundPoint> finish;
  std::vector<double> qos;  // per-frame average rate floor per user
  PenaltyConfig penalty;
  std::uint64_t seed = 1;

  int user_count() const { return static_cast<int>(users.size()); }
  int target_count() const { return static_cast<int>(targets.size()); }
  /// Largest horizontal displacement between consecutive slots.
  double max_step() const { return v_max * frames.slot_seconds; }
  double antenna_power() const { return array.antenna_count() * radio.p_max; }

  /// Squared horizontal radius around a target inside which it can be
  /// sensed (negative when unreachable at this altitude).
  double sensing_radius_sq() const {
    if (radio.gamma_th <= 0) return std::numeric_limits<double>::infinity();
    const double ratio = antenna_power() / radio.gamma_th;
    const double d2 = radio.pathloss_exponent_sensing == 4 ? std::sqrt(ratio) : ratio;
    return d2 - altitude * altitude;
  }

  /// Throws ValidationError listing every violated invariant.
  void validate() const {
    std::vector<std::string> problems;
    auto need = [&](bool ok, const std::string& what) {
      if (!ok) problems.push_back(what);
    };
    need(!users.empty(), "at least one user is required");
    need(qos.size() == users.size(), "one QoS floor per user is required");
    for (double r : qos) need(r >= 0, "QoS floors must be >= 0");
    need(altitude > 0, "altitude must be > 0");
    need(v_max >= 0, "maximum speed must be >= 0");
    need(area.x_min < area.x_max && area.y_min < area.y_max, "area bounds are empty");
    try {
      radio.validate();
    } catch (const std::exception& ex) {
      problems.push_back(ex.what());
    }
    try {
      array.validate();
    } catch (const std::exception& ex) {
      problems.push_back(ex.what());
    }
    try {
      frames.validate();
    } catch (const std::exception& ex) {
      problems.push_back(ex.what());
    }
    try {
      penalty.validate();
    } catch (const std::exception& ex) {
      problems.push_back(ex.what());
    }
    need(start.has_value() == finish.has_value(),
         "start and finish locations must be given together");
    if (start && finish && problems.empty()) {
      const double reach = (frames.n_total - 1) * max_step();
      need(horizontal_distance(*start, *finish) <= reach + 1e-9,
           "finish location is unreachable from the start within the horizon");
    }
    if (!problems.empty()) {
      std::string msg;
      for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
      throw ValidationError(msg);
    }
  }
};

/// Desk-scale reference mission: four users near the corners, four targets
/// clustered around the origin, west-to-east transit. horizon and frame
/// lengths are in seconds.
inline Scenario reference_scenario(double horizon_s = 80.0, double frame_s = 20.0) {
  Scenario s;
  s.users = {{-250.0, 200.0}, {250.0, 200.0}, {250.0, -200.0}, {-250.0, -200.0}};
  s.targets = {{-60.0, 60.0}, {60.0, 60.0}, {60.0, -60.0}, {-60.0, -60.0}};
  s.radio.p_max = 0.1;
  s.radio.gamma_th = 6e-5;
  s.radio.noise_power = 1e-10;  // -100 dB
  s.radio.beta0 = 1e-3;         // -30 dB
  s.array = ArrayGeometry{4, 4};
  s.frames.slot_seconds = 0.25;
  s.frames.n_total = static_cast<int>(std::lround(horizon_s / s.frames.slot_seconds));
  s.frames.n_per_frame = static_cast<int>(std::lround(frame_s / s.frames.slot_seconds));
  s.start = GroundPoint{-150.0, 0.0};
  s.finish = GroundPoint{150.0, 0.0};
  s.qos.assign(s.users.size(), 0.25);
  return s;
}

}  // namespace isac
