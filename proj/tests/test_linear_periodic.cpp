#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "malkin/errors.hpp"
#include "malkin/examples.hpp"
#include "malkin/linear_periodic.hpp"
#include "support.hpp"

using namespace malkin;
using testing_support::vec;

namespace {

std::vector<double> sorted_real_multipliers(const MonodromyRecord& r) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < r.multipliers.size(); ++i) {
    REQUIRE(std::abs(r.multipliers[i].imag()) <= 1e-6);
    out.push_back(r.multipliers[i].real());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// x1' = 0, x2' = -c x2, x3' = -c x3 with exp(-c) = 1/2 over T = 1: every point
// of the x1 axis is 1-periodic and W_T = diag(1, 1/2, 1/2).
struct ContractingBlock {
  OdeSystem sys;
  PeriodicFamily family;
  ContractingBlock() {
    Mat a = Mat::Zero(3, 3);
    a(1, 1) = a(2, 2) = -std::log(2.0);
    sys = testing_support::linear_system(a, [](double) { return Vec::Zero(3); }, 1.0);
    family.k = 1;
    family.center = Vec::Zero(1);
    family.radius = 10.0;
    family.xi = [](const Vec& h) { return vec({h[0], 0.0, 0.0}); };
    family.dxi = [](const Vec&) { return Mat(Vec::Unit(3, 0)); };
  }
};

}  // namespace

TEST_SUITE("linear_periodic") {

TEST_CASE("coupled family is periodic with full-rank tangent") {
  const auto p = examples::build_coupled({0.5, 1.0});
  std::vector<Vec> hs;
  for (int i = 0; i < 5; ++i) hs.push_back(vec({1.1 * i, 2.3 + 0.7 * i}));
  const FamilyCheck chk = check_family(p.sys, p.family, hs);
  CHECK(chk.periodicity_defect <= LinearPeriodicConfig{}.periodicity_tol);
  CHECK(chk.min_singular_value > LinearPeriodicConfig{}.rank_tol);
}

TEST_CASE("coupled monodromy") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const double small = std::exp(-4 * kPi);
  for (const Vec& h : {vec({0.0, 0.0}), vec({2.0, 5.0}), vec({kPi / 3, 4 * kPi / 3})}) {
    const MonodromyRecord r = monodromy(p.sys, p.family, h);
    const auto mu = sorted_real_multipliers(r);
    CHECK(std::abs(mu[0] - small) <= 1e-6);
    CHECK(std::abs(mu[1] - small) <= 1e-6);
    CHECK(std::abs(mu[2] - 1.0) <= 1e-6);
    CHECK(std::abs(mu[3] - 1.0) <= 1e-6);
    CHECK(r.geo_mult_one == 2);
    CHECK_FALSE(r.excess_multiplicity);
    CHECK(r.kernel_residual() <= LinearPeriodicConfig{}.kernel_tol);
    CHECK(r.kernel_basis.cols() == r.adjoint_kernel_basis.cols());

    std::complex<double> prod = 1.0;
    for (Eigen::Index i = 0; i < 4; ++i) prod *= r.multipliers[i];
    const double det = r.w_t.determinant();
    CHECK(std::abs(prod - det) <= 1e-8 * std::abs(det));
    // Columns of Dxi are periodic directions.
    const Mat dxi = p.family.dxi(h);
    CHECK((r.w_t * dxi - dxi).norm() <= 1e-8);
  }
}

TEST_CASE("zero field has identity monodromy") {
  const OdeSystem s = testing_support::zero_system(2, 1.0);
  const MonodromyRecord r = monodromy(s, testing_support::identity_family(2), vec({0.3, -0.2}));
  CHECK((r.w_t - Mat::Identity(2, 2)).norm() == 0.0);
  CHECK(r.geo_mult_one == 2);
}

TEST_CASE("planar monodromy") {
  const auto p = examples::build_planar(0.0, 0.0);
  for (double th : {0.0, 1.0, 4.0}) {
    const MonodromyRecord r = monodromy(p.sys, p.family, vec({th}));
    const auto mu = sorted_real_multipliers(r);
    CHECK(std::abs(mu[0] - std::exp(-4 * kPi)) <= 1e-6);
    CHECK(std::abs(mu[1] - 1.0) <= 1e-6);
    CHECK(r.geo_mult_one == 1);
  }
}

TEST_CASE("too few periodic directions is a degenerate family") {
  const OdeSystem s =
      testing_support::linear_system(-Mat::Identity(2, 2), [](double) { return Vec::Zero(2); }, 1.0);
  CHECK_THROWS_AS(monodromy(s, testing_support::identity_family(2), vec({1.0, 1.0})),
                  DegenerateFamily);
}

TEST_CASE("coupled adjoint basis") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const double th = 0.9, et = 3.7;
  const AdjointBasis u = adjoint_periodic_basis(p.sys, p.family, vec({th, et}));
  REQUIRE(u.k() == 2);
  CHECK((u.initial().transpose() * u.initial() - Mat::Identity(2, 2)).norm() <= 1e-12);
  CHECK(u.periodicity_defect() <= LinearPeriodicConfig{}.periodicity_tol);

  SUBCASE("span follows the explicit solutions") {
    for (double t : {0.0, 1.3, 3.0, 5.5, kTwoPi}) {
      Mat ref = Mat::Zero(4, 2);
      ref(0, 0) = -std::cos(t + th);
      ref(1, 0) = std::sin(t + th);
      ref(2, 1) = -std::cos(t + et);
      ref(3, 1) = std::sin(t + et);
      CHECK(testing_support::principal_angle(u.at(t), ref) <= 1e-6);
    }
  }
  SUBCASE("orientation against the tangent pins the basis itself") {
    Mat ref = Mat::Zero(4, 2);
    ref(0, 0) = -std::cos(th);
    ref(1, 0) = std::sin(th);
    ref(2, 1) = -std::cos(et);
    ref(3, 1) = std::sin(et);
    CHECK((u.initial() - ref).norm() <= 1e-8);
  }
  SUBCASE("pairing with variational solutions is conserved") {
    const VariationalFlow vf = variational_flow(p.sys, p.family.xi(vec({th, et})), kTwoPi,
                                                IntegratorConfig{}.tightened(1e-2));
    const Mat p0 = u.at(0.0).transpose() * vf.w(0.0);
    double drift = 0.0;
    for (int i = 1; i <= 64; ++i) {
      const double t = kTwoPi * i / 64;
      drift = std::max(drift, (u.at(t).transpose() * vf.w(t) - p0).norm());
    }
    CHECK(drift <= 1e-8);
  }
}

TEST_CASE("adjoint of a skew system with identity monodromy") {
  Mat a(2, 2);
  a << 0, 1, -1, 0;
  const OdeSystem s = testing_support::linear_system(a, [](double) { return Vec::Zero(2); }, kTwoPi);
  const auto fam = testing_support::identity_family(2);
  const AdjointBasis u = adjoint_periodic_basis(s, fam, vec({0.5, 0.5}));
  REQUIRE(u.k() == 2);
  for (double t : {0.5, 2.0, 4.5}) {
    Mat rot(2, 2);
    rot << std::cos(t), std::sin(t), -std::sin(t), std::cos(t);
    CHECK((u.at(t) - rot * u.initial()).norm() <= 1e-8);
  }
}

TEST_CASE("coupled frame") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec h = vec({kPi, kPi});
  const ReductionFrame frame = build_frame(p.sys, p.family, h);
  const FrameSnapshot snap = frame.at(p.sys, p.family, h);

  CHECK((frame.s() * frame.s_inv() - Mat::Identity(4, 4)).norm() <= 1e-12);
  CHECK(snap.valid);
  CHECK(snap.top_right_norm <= LinearPeriodicConfig{}.block_tol);
  CHECK(std::abs(snap.det_delta) > LinearPeriodicConfig{}.delta_tol);

  const Mat& d = snap.y0_inv_minus_yt_inv;
  const Vec sv = Eigen::JacobiSVD<Mat>(d).singularValues();
  CHECK(sv[1] > 1e-3 * sv[0]);
  CHECK(sv[2] <= 1e-8 * sv[0]);
  CHECK(d.topRows(2).norm() <= 1e-8 * d.norm());

  const Mat sd = frame.s_inv() * p.family.dxi(h);
  CHECK(sd.bottomRows(2).norm() <= 1e-12);
  CHECK(std::abs(sd.topRows(2).determinant()) > 1e-6);
  CHECK(frame.psi_complement_norm(p.family, h) <= 1e-12);

  SUBCASE("invariants hold away from the reference point") {
    for (const Vec& h2 : {vec({0.5, 1.0}), vec({5.0, 2.5})}) {
      const FrameSnapshot s2 = frame.at(p.sys, p.family, h2);
      CHECK(s2.valid);
      CHECK(std::abs(frame.psi(p.family, h2).determinant()) > 1e-6);
    }
  }
}

TEST_CASE("frame with every direction periodic") {
  const OdeSystem s = testing_support::zero_system(2, 1.0);
  const auto fam = testing_support::identity_family(2);
  const ReductionFrame frame = build_frame(s, fam, vec({0.1, 0.2}));
  CHECK(frame.k() == 2);
  const FrameSnapshot snap = frame.at(s, fam, vec({0.1, 0.2}));
  CHECK(snap.y0_inv_minus_yt_inv.norm() <= 1e-12);
  CHECK(snap.delta.size() == 0);
  CHECK(snap.det_delta == 1.0);
}

TEST_CASE("frame picks the contracting coordinates") {
  const ContractingBlock cb;
  const ReductionFrame frame = build_frame(cb.sys, cb.family, vec({0.7}));
  Mat s = frame.s().cwiseAbs();
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(s.row(i).sum() == doctest::Approx(1.0));
    CHECK(s.col(i).sum() == doctest::Approx(1.0));
  }
  CHECK(frame.s()(0, 0) == 1.0);
  auto piv = frame.pivots();
  std::sort(piv.begin(), piv.end());
  CHECK(piv == std::vector<int>{1, 2});
  const FrameSnapshot snap = frame.at(cb.sys, cb.family, vec({0.7}));
  CHECK(snap.valid);
  CHECK(std::abs(snap.det_delta) == doctest::Approx(1.0));
}

TEST_CASE("orthonormal completion of an adjoint basis") {
  Mat b(3, 1);
  b << 0.6, 0.8, 0.0;
  const Mat u0 = adjoint_fundamental_initial(b);
  CHECK((u0.transpose() * u0 - Mat::Identity(3, 3)).norm() <= 1e-12);
  CHECK((u0.col(0) - b).norm() <= 1e-15);
}

}  // TEST_SUITE
