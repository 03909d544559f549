#pragma once

#include <string>
#include <vector>

#include "malkin/linear_periodic.hpp"

namespace malkin::examples {

/// Clip to [-1, 1].
double phi(double x);

/// Int_0^{2pi} sin t phi(k sin t) dt, and its cosine twin. Both odd in k.
double I(double k);
double J(double k);

struct CoupledOscillatorParams {
  double k1 = 0.5;
  double k2 = 1.0;
  /// Drop the perturbation entirely (g = 0).
  bool unforced = false;

  [[nodiscard]] bool k1_borderline() const;
  [[nodiscard]] bool k1_inside() const;  ///< |k1| < 1
  [[nodiscard]] bool k2_zero() const { return k2 == 0.0; }
  [[nodiscard]] bool product_one() const;  ///< |k1 k2| = 1
};

struct Problem {
  std::string name;
  OdeSystem sys;
  PeriodicFamily family;
  /// Coordinates of h that are angles (zeros are reduced modulo 2pi there).
  std::vector<bool> angular;
  std::vector<std::string> warnings;
};

/// Two coupled attracting unit-circle oscillators, forced through phi:
///   x1' = x2 - x1 (x1^2 + x2^2 - 1)
///   x2' = -x1 - x2 (x1^2 + x2^2 - 1) + eps (sin t + phi(k1 x3))
///   x3' = x4 - x3 (x3^2 + x4^2 - 1)
///   x4' = -x3 - x4 (x3^2 + x4^2 - 1) + eps phi(k2 x2)
/// with family xi(theta, eta) = (sin theta, cos theta, sin eta, cos eta).
Problem build_coupled(const CoupledOscillatorParams& params);

/// Single oscillator forced by eps (sin t + phi(k1 sin(t + eta))), family
/// xi(theta) = (sin theta, cos theta). Warns when the forcing vanishes.
Problem build_planar(double k1, double eta, bool unforced = false);

/// x' = -x + eps cos t on the line; its periodic orbit starts at eps/2.
OdeSystem build_forced_linear();

struct ClosedFormOracle {
  CoupledOscillatorParams params;
  double i1 = 0.0;
  double j2 = 0.0;
  double a1 = 0.0;  ///< arccos(i1/pi); meaningful when |k1| <= 1
  /// Zeros of M in [0, 2pi)^2 with their local degrees.
  std::vector<Vec> predicted_zeros;
  std::vector<int> predicted_degrees;
  bool non_isolated = false;  ///< k2 = 0: M2 vanishes identically
  bool borderline = false;    ///< |k1| = 1: two degenerate zeros of index 0

  [[nodiscard]] Vec malkin(double theta, double eta) const;
  [[nodiscard]] double det_dm(double theta, double eta) const;
};

ClosedFormOracle oracle(const CoupledOscillatorParams& params);

struct PlanarOracle {
  double k1 = 0.0;
  double eta = 0.0;
  double i1 = 0.0;
  bool degenerate = false;
  std::vector<double> predicted_zeros;  ///< in [0, 2pi), ascending

  [[nodiscard]] double malkin(double theta) const;
  /// arctan((pi + i1 cos eta) / (i1 sin eta)), pi/2 when i1 sin eta = 0.
  [[nodiscard]] double theta_star() const;
};

PlanarOracle planar_oracle(double k1, double eta);

/// Whether g is Lipschitz-differentiable near xi(h0): |k2 cos theta0| != 1
/// and |k1 sin eta0| != 1.
bool lipschitz_derivative_condition(const CoupledOscillatorParams& params, const Vec& h0,
                                    double tol = 1e-9);

/// Reduce each angular coordinate into [0, 2pi).
Vec wrap_angles(const Vec& h, const std::vector<bool>& angular);

}  // namespace malkin::examples
