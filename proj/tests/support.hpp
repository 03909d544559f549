#pragma once

#include <cmath>
#include <vector>

#include "malkin/bifurcation.hpp"
#include "malkin/examples.hpp"
#include "malkin/linear_periodic.hpp"

namespace testing_support {

using malkin::Mat;
using malkin::Vec;

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline malkin::OdeSystem zero_system(int n, double period) {
  malkin::OdeSystem s;
  s.n = n;
  s.period = period;
  s.f = [](double, const malkin::ConstRefVec&, malkin::RefVec out) { out.setZero(); };
  s.df = [](double, const malkin::ConstRefVec&, malkin::RefMat out) { out.setZero(); };
  s.g = [](double, const malkin::ConstRefVec&, double, malkin::RefVec out) { out.setZero(); };
  return s;
}

/// x' = A x + eps b(t).
inline malkin::OdeSystem linear_system(const Mat& a, std::function<Vec(double)> b,
                                       double period) {
  malkin::OdeSystem s;
  s.n = static_cast<int>(a.rows());
  s.period = period;
  s.f = [a](double, const malkin::ConstRefVec& x, malkin::RefVec out) { out = a * x; };
  s.df = [a](double, const malkin::ConstRefVec&, malkin::RefMat out) { out = a; };
  s.g = [b](double t, const malkin::ConstRefVec&, double, malkin::RefVec out) { out = b(t); };
  return s;
}

/// xi(h) = h on a big ball.
inline malkin::PeriodicFamily identity_family(int n) {
  malkin::PeriodicFamily fam;
  fam.k = n;
  fam.center = Vec::Zero(n);
  fam.radius = 100.0;
  fam.xi = [](const Vec& h) { return h; };
  fam.dxi = [n](const Vec&) { return Mat(Mat::Identity(n, n)); };
  return fam;
}

inline malkin::Box square() {
  return malkin::Box{Vec::Zero(2), Vec::Constant(2, malkin::kTwoPi)};
}

/// Coupled problem with its frame at the center of the fundamental square.
struct Coupled {
  malkin::examples::Problem prob;
  malkin::ReductionFrame frame;
  malkin::BifFunction malkin;
  malkin::examples::ClosedFormOracle oracle;

  explicit Coupled(malkin::examples::CoupledOscillatorParams p, malkin::BifConfig cfg = {})
      : prob(malkin::examples::build_coupled(p)),
        frame(malkin::build_frame(prob.sys, prob.family, Vec::Constant(2, malkin::kPi))),
        malkin(malkin::malkin_function(prob.sys, prob.family, frame, prob.angular, cfg)),
        oracle(malkin::examples::oracle(p)) {}
};

inline const Coupled& coupled_default() {
  static const Coupled c({0.5, 1.0});
  return c;
}

inline double torus_distance(const Vec& a, const Vec& b) {
  Vec d = a - b;
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = std::remainder(d[i], malkin::kTwoPi);
  return d.norm();
}

/// Largest principal angle between the column spans of a and b.
inline double principal_angle(const Mat& a, const Mat& b) {
  const Mat qa = Eigen::HouseholderQR<Mat>(a).householderQ() * Mat::Identity(a.rows(), a.cols());
  const Mat qb = Eigen::HouseholderQR<Mat>(b).householderQ() * Mat::Identity(b.rows(), b.cols());
  const Vec sv = Eigen::JacobiSVD<Mat>(qa.transpose() * qb).singularValues();
  return std::acos(std::min(1.0, sv.minCoeff()));
}

/// Winding number of a planar map around the boundary of a box, by summing
/// principal angle increments over `per_edge` uniform samples per edge.
inline int winding_number(const std::function<Vec(const Vec&)>& fn, const malkin::Box& box,
                          int per_edge) {
  std::vector<Vec> pts;
  const Vec& lo = box.lo;
  const Vec& hi = box.hi;
  const Vec corners[4] = {lo, vec({hi[0], lo[1]}), hi, vec({lo[0], hi[1]})};
  for (int e = 0; e < 4; ++e)
    for (int i = 0; i < per_edge; ++i)
      pts.push_back(corners[e] + (corners[(e + 1) % 4] - corners[e]) * (double(i) / per_edge));
  double total = 0.0;
  Vec prev = fn(pts.front());
  for (std::size_t i = 1; i <= pts.size(); ++i) {
    const Vec cur = fn(pts[i % pts.size()]);
    total += std::atan2(prev[0] * cur[1] - prev[1] * cur[0], prev.dot(cur));
    prev = cur;
  }
  return static_cast<int>(std::lround(total / malkin::kTwoPi));
}

}  // namespace testing_support
