#pragma once

// Uniform planar array geometry, LoS channel model and beam-pattern kernels.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

namespace isac {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;

/// Horizontal ground location in meters (altitude 0).
struct GroundPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const GroundPoint&, const GroundPoint&) = default;
};

/// UAV location; the array plane is parallel to the ground.
struct UavPosition {
  double x = 0.0;
  double y = 0.0;
  double altitude = 0.0;

  GroundPoint horizontal() const { return {x, y}; }
};

inline UavPosition at_altitude(GroundPoint p, double altitude) {
  return {p.x, p.y, altitude};
}

inline double horizontal_distance_sq(GroundPoint a, GroundPoint b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double horizontal_distance(GroundPoint a, GroundPoint b) {
  return std::sqrt(horizontal_distance_sq(a, b));
}

/// Squared 3-D distance between the UAV and a ground point.
inline double distance_sq(const UavPosition& q, GroundPoint p) {
  return horizontal_distance_sq(q.horizontal(), p) + q.altitude * q.altitude;
}

inline double distance(const UavPosition& q, GroundPoint p) {
  return std::sqrt(distance_sq(q, p));
}

/// M_x-by-M_y planar array. Only the spacing-to-wavelength ratio enters the
/// steering vector; the wavelength itself is used for the carrier phase term.
struct ArrayGeometry {
  int m_x = 4;
  int m_y = 4;
  double element_spacing_wavelengths = 0.5;
  double wavelength_m = 0.125;

  int antenna_count() const { return m_x * m_y; }

  void validate() const {
    if (m_x < 1 || m_y < 1) {
      throw std::invalid_argument("array dimensions must be >= 1");
    }
    if (!(element_spacing_wavelengths > 0.0) || !(wavelength_m > 0.0)) {
      throw std::invalid_argument("element spacing and wavelength must be > 0");
    }
  }
};

struct DirectionCosines {
  double phi = 0.0;    // along x
  double omega = 0.0;  // along y
};

inline DirectionCosines direction_cosines(const UavPosition& q, GroundPoint p) {
  const double d = distance(q, p);
  return {(q.x - p.x) / d, (q.y - p.y) / d};
}

/// Kronecker product of the x and y phase ramps; entry (ix, iy) sits at
/// index ix * m_y + iy.
inline ComplexVector steering_vector(const ArrayGeometry& g, const UavPosition& q,
                                     GroundPoint p) {
  const auto [phi, omega] = direction_cosines(q, p);
  const double k = 2.0 * std::numbers::pi * g.element_spacing_wavelengths;
  ComplexVector a(g.antenna_count());
  for (int ix = 0; ix < g.m_x; ++ix) {
    for (int iy = 0; iy < g.m_y; ++iy) {
      a(ix * g.m_y + iy) = std::polar(1.0, -k * (ix * phi + iy * omega));
    }
  }
  return a;
}

/// Large-scale power gain beta0 / d^2.
inline double channel_gain(const UavPosition& q, GroundPoint p, double beta0) {
  return beta0 / distance_sq(q, p);
}

/// LoS channel sqrt(gain) e^{-j 2 pi d / lambda} a(q, u). d / lambda is reduced
/// modulo 1 before forming the phase.
inline ComplexVector channel_vector(const UavPosition& q, GroundPoint u, double beta0,
                                    const ArrayGeometry& g) {
  const double cycles = distance(q, u) / g.wavelength_m;
  const double frac = cycles - std::floor(cycles);
  const Complex carrier = std::polar(std::sqrt(channel_gain(q, u, beta0)),
                                     -2.0 * std::numbers::pi * frac);
  return carrier * steering_vector(g, q, u);
}

/// |a(q, v)^H w|^2.
inline double beam_pattern_gain(const ComplexVector& w, const ArrayGeometry& g,
                                const UavPosition& q, GroundPoint v) {
  return std::norm(steering_vector(g, q, v).dot(w));
}

/// Same quantity from an explicit direction (used for beam-pattern maps).
inline double beam_pattern_gain(const ComplexVector& w, const ArrayGeometry& g,
                                DirectionCosines dir) {
  const double k = 2.0 * std::numbers::pi * g.element_spacing_wavelengths;
  Complex acc{0.0, 0.0};
  for (int ix = 0; ix < g.m_x; ++ix) {
    for (int iy = 0; iy < g.m_y; ++iy) {
      acc += std::polar(1.0, k * (ix * dir.phi + iy * dir.omega)) * w(ix * g.m_y + iy);
    }
  }
  return std::norm(acc);
}

namespace detail {

/// |sin(m x) / (m sin x)| with the removable singularities filled in.
inline double dirichlet_magnitude(int m, double half_phase) {
  const double s = std::sin(half_phase);
  if (std::abs(s) < 1e-12) return 1.0;
  return std::abs(std::sin(m * half_phase) / (m * s));
}

}  // namespace detail

/// cos(phi_kj) = |a(q,u)^H a(q,v)| / M, evaluated by direct inner product.
inline double channel_correlation(const UavPosition& q, GroundPoint u, GroundPoint v,
                                  const ArrayGeometry& g) {
  const ComplexVector au = steering_vector(g, q, u);
  const ComplexVector av = steering_vector(g, q, v);
  return std::abs(au.dot(av)) / g.antenna_count();
}

/// Closed form of channel_correlation as a product of two Dirichlet kernels.
inline double channel_correlation_dirichlet(const UavPosition& q, GroundPoint u,
                                            GroundPoint v, const ArrayGeometry& g) {
  const auto du = direction_cosines(q, u);
  const auto dv = direction_cosines(q, v);
  const double k = std::numbers::pi * g.element_spacing_wavelengths;
  return detail::dirichlet_magnitude(g.m_x, k * (dv.phi - du.phi)) *
         detail::dirichlet_magnitude(g.m_y, k * (dv.omega - du.omega));
}

}  // namespace isac
