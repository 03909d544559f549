#include "malkin/examples.hpp"

#include <algorithm>
#include <cmath>

namespace malkin::examples {

double phi(double x) { return std::clamp(x, -1.0, 1.0); }

double I(double k) {
  const double a = std::abs(k);
  const double v = a <= 1.0 ? a * kPi : 2.0 * a * std::asin(1.0 / a) + 2.0 * std::sqrt(a * a - 1.0) / a;
  return k < 0.0 ? -v : v;
}

double J(double k) { return I(k); }

bool CoupledOscillatorParams::k1_borderline() const { return std::abs(k1) == 1.0; }
bool CoupledOscillatorParams::k1_inside() const { return std::abs(k1) < 1.0; }
bool CoupledOscillatorParams::product_one() const { return std::abs(k1 * k2) == 1.0; }

namespace {

// Field and Jacobian of one attracting unit-circle oscillator on (x[i], x[i+1]).
void oscillator(const ConstRefVec& x, Eigen::Index i, RefVec out) {
  const double a = x[i], b = x[i + 1];
  const double r = a * a + b * b - 1.0;
  out[i] = b - a * r;
  out[i + 1] = -a - b * r;
}

void oscillator_jacobian(const ConstRefVec& x, Eigen::Index i, RefMat out) {
  const double a = x[i], b = x[i + 1];
  const double r = a * a + b * b - 1.0;
  out(i, i) = -r - 2.0 * a * a;
  out(i, i + 1) = 1.0 - 2.0 * a * b;
  out(i + 1, i) = -1.0 - 2.0 * a * b;
  out(i + 1, i + 1) = -r - 2.0 * b * b;
}

PeriodicFamily circle_family(int k) {
  PeriodicFamily fam;
  fam.k = k;
  fam.center = Vec::Constant(k, kPi);
  fam.radius = 100.0;
  fam.xi = [k](const Vec& h) {
    Vec z(2 * k);
    for (int i = 0; i < k; ++i) {
      z[2 * i] = std::sin(h[i]);
      z[2 * i + 1] = std::cos(h[i]);
    }
    return z;
  };
  fam.dxi = [k](const Vec& h) {
    Mat d = Mat::Zero(2 * k, k);
    for (int i = 0; i < k; ++i) {
      d(2 * i, i) = std::cos(h[i]);
      d(2 * i + 1, i) = -std::sin(h[i]);
    }
    return d;
  };
  return fam;
}

double wrap(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w -= kTwoPi;
  return w;
}

}  // namespace

Problem build_coupled(const CoupledOscillatorParams& params) {
  Problem p;
  p.name = "coupled";
  p.sys.n = 4;
  p.sys.period = kTwoPi;
  p.sys.f = [](double, const ConstRefVec& x, RefVec out) {
    oscillator(x, 0, out);
    oscillator(x, 2, out);
  };
  p.sys.df = [](double, const ConstRefVec& x, RefMat out) {
    out.setZero();
    oscillator_jacobian(x, 0, out);
    oscillator_jacobian(x, 2, out);
  };
  const double k1 = params.k1, k2 = params.k2;
  if (params.unforced) {
    p.sys.g = [](double, const ConstRefVec&, double, RefVec out) { out.setZero(); };
  } else {
    p.sys.g = [k1, k2](double t, const ConstRefVec& x, double, RefVec out) {
      out[0] = 0.0;
      out[1] = std::sin(t) + phi(k1 * x[2]);
      out[2] = 0.0;
      out[3] = phi(k2 * x[1]);
    };
  }
  p.family = circle_family(2);
  p.angular = {true, true};
  if (!params.unforced && params.k2_zero())
    p.warnings.push_back("k2 = 0: the second Malkin component vanishes identically");
  return p;
}

Problem build_planar(double k1, double eta, bool unforced) {
  Problem p;
  p.name = "planar";
  p.sys.n = 2;
  p.sys.period = kTwoPi;
  p.sys.f = [](double, const ConstRefVec& x, RefVec out) { oscillator(x, 0, out); };
  p.sys.df = [](double, const ConstRefVec& x, RefMat out) { oscillator_jacobian(x, 0, out); };
  if (unforced) {
    p.sys.g = [](double, const ConstRefVec&, double, RefVec out) { out.setZero(); };
  } else {
    p.sys.g = [k1, eta](double t, const ConstRefVec&, double, RefVec out) {
      out[0] = 0.0;
      out[1] = std::sin(t) + phi(k1 * std::sin(t + eta));
    };
  }
  p.family = circle_family(1);
  p.angular = {true};
  if (!unforced && planar_oracle(k1, eta).degenerate)
    p.warnings.push_back("DegeneratePerturbation: sin t + phi(k1 sin(t + eta)) vanishes identically");
  return p;
}

OdeSystem build_forced_linear() {
  OdeSystem sys;
  sys.n = 1;
  sys.period = kTwoPi;
  sys.f = [](double, const ConstRefVec& x, RefVec out) { out[0] = -x[0]; };
  sys.df = [](double, const ConstRefVec&, RefMat out) { out(0, 0) = -1.0; };
  sys.g = [](double t, const ConstRefVec&, double, RefVec out) { out[0] = std::cos(t); };
  return sys;
}

Vec ClosedFormOracle::malkin(double theta, double eta) const {
  Vec m(2);
  m[0] = kPi * std::cos(theta) + i1 * std::cos(theta - eta);
  m[1] = -j2 * std::sin(theta - eta);
  return m;
}

double ClosedFormOracle::det_dm(double theta, double eta) const {
  return -kPi * j2 * std::sin(theta) * std::cos(theta - eta);
}

ClosedFormOracle oracle(const CoupledOscillatorParams& params) {
  ClosedFormOracle o;
  o.params = params;
  o.i1 = params.unforced ? 0.0 : I(params.k1);
  o.j2 = params.unforced ? 0.0 : J(params.k2);
  if (params.unforced) {
    o.non_isolated = true;
    return o;
  }
  o.borderline = params.k1_borderline();
  if (std::abs(params.k1) <= 1.0)
    o.a1 = params.k1 == 1.0 ? 0.0 : params.k1 == -1.0 ? kPi : std::acos(o.i1 / kPi);
  if (params.k2_zero()) {
    o.non_isolated = true;
    return o;
  }
  if (std::abs(params.k1) > 1.0) return o;

  const double a = o.a1;
  const Vec cand[4] = {Vec{{a, kPi + a}}, Vec{{2.0 * kPi - a, kPi - a}},
                       Vec{{kPi - a, kPi - a}}, Vec{{kPi + a, kPi + a}}};
  for (const Vec& c : cand) {
    const Vec w{{wrap(c[0]), wrap(c[1])}};
    const bool seen = std::any_of(o.predicted_zeros.begin(), o.predicted_zeros.end(),
                                  [&](const Vec& q) { return (q - w).norm() < 1e-12; });
    if (seen) continue;
    o.predicted_zeros.push_back(w);
    const double d = o.det_dm(w[0], w[1]);
    o.predicted_degrees.push_back(o.borderline ? 0 : (d > 0.0) - (d < 0.0));
  }
  return o;
}

double PlanarOracle::malkin(double theta) const {
  return kPi * std::cos(theta) + i1 * std::cos(theta - eta);
}

double PlanarOracle::theta_star() const {
  const double den = i1 * std::sin(eta);
  if (den == 0.0) return kPi / 2.0;
  return std::atan((kPi + i1 * std::cos(eta)) / den);
}

PlanarOracle planar_oracle(double k1, double eta) {
  PlanarOracle o;
  o.k1 = k1;
  o.eta = eta;
  o.i1 = I(k1);
  const double e = wrap(eta);
  o.degenerate = (k1 == 1.0 && std::abs(e - kPi) <= 1e-12) ||
                 (k1 == -1.0 && std::min(e, kTwoPi - e) <= 1e-12);
  if (o.degenerate) return o;
  // M = A cos theta + B sin theta vanishes at atan2(B, A) +/- pi/2.
  const double a = kPi + o.i1 * std::cos(eta);
  const double b = o.i1 * std::sin(eta);
  const double p = std::atan2(b, a);
  o.predicted_zeros = {wrap(p + kPi / 2.0), wrap(p - kPi / 2.0)};
  std::sort(o.predicted_zeros.begin(), o.predicted_zeros.end());
  return o;
}

bool lipschitz_derivative_condition(const CoupledOscillatorParams& params, const Vec& h0,
                                    double tol) {
  return std::abs(std::abs(params.k2 * std::cos(h0[0])) - 1.0) > tol &&
         std::abs(std::abs(params.k1 * std::sin(h0[1])) - 1.0) > tol;
}

Vec wrap_angles(const Vec& h, const std::vector<bool>& angular) {
  Vec w = h;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (static_cast<std::size_t>(i) < angular.size() && angular[i]) w[i] = wrap(w[i]);
  return w;
}

}  // namespace malkin::examples
