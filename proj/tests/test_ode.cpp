#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "malkin/errors.hpp"
#include "malkin/ode.hpp"
#include "malkin/sampling.hpp"
#include "support.hpp"

using namespace malkin;
using testing_support::vec;

namespace {

// Classical RK4 with a fixed step, as an independent reference.
Vec rk4(const OdeSystem& sys, Vec x, double eps, double t_end, double h) {
  const int steps = static_cast<int>(std::ceil(t_end / h));
  h = t_end / steps;
  const int n = sys.n;
  Vec k1(n), k2(n), k3(n), k4(n);
  double t = 0.0;
  for (int i = 0; i < steps; ++i) {
    sys.full_field(t, x, eps, k1);
    sys.full_field(t + 0.5 * h, x + 0.5 * h * k1, eps, k2);
    sys.full_field(t + 0.5 * h, x + 0.5 * h * k2, eps, k3);
    sys.full_field(t + h, x + h * k3, eps, k4);
    x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += h;
  }
  return x;
}

Rhs rhs_of(const OdeSystem& sys, double eps) {
  return [&sys, eps](double t, const Vec& y, Vec& dy) { sys.full_field(t, y, eps, dy); };
}

}  // namespace

TEST_SUITE("ode") {

TEST_CASE("unperturbed coupled orbit returns to its start") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec z = p.family.xi(vec({0.0, 0.0}));
  CHECK((z - vec({0, 1, 0, 1})).norm() == 0.0);
  const Trajectory tr = integrate(p.sys, z, 0.0, kTwoPi);
  CHECK((tr.end() - z).norm() <= 1e-8);
}

TEST_CASE("zero field leaves the state constant") {
  const OdeSystem s = testing_support::zero_system(3, 1.0);
  const Vec z = vec({0.3, -2.0, 7.5});
  const Trajectory tr = integrate(s, z, 0.5, 3.0);
  for (double t : {0.0, 0.7, 1.9, 3.0}) CHECK((tr(t) - z).norm() == 0.0);
}

TEST_CASE("perturbed coupled trajectory matches a fine RK4 run") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec z = p.family.xi(vec({kPi / 3, kPi + kPi / 3}));
  const double eps = 1e-3;
  const Trajectory tr = integrate(p.sys, z, eps, kTwoPi);
  const Vec ref = rk4(p.sys, z, eps, kTwoPi, 1e-5);
  CHECK((tr.end() - ref).norm() <= 1e-8);
  CHECK((tr.end() - z).norm() <= 10 * eps);
}

TEST_CASE("trajectory stores the initial state and reproduces nodes exactly") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec z = vec({0.2, 0.9, -0.4, 1.1});
  const Trajectory tr = integrate(p.sys, z, 0.01, kTwoPi);
  CHECK((tr.path.node(0) - z).norm() == 0.0);
  for (std::size_t i = 0; i < tr.grid().size(); i += 7)
    CHECK((tr(tr.grid()[i]) - tr.path.node(i)).norm() == 0.0);
}

TEST_CASE("semigroup property") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec z = vec({0.2, 0.9, -0.4, 1.1});
  IntegratorConfig cfg;
  const double eps = 0.01, t1 = 2.0, t2 = 5.0;
  const Rhs rhs = rhs_of(p.sys, eps);
  const DenseSolution direct = integrate_rhs(rhs, 0.0, z, t2, cfg);
  const DenseSolution first = integrate_rhs(rhs, 0.0, z, t1, cfg);
  const DenseSolution second = integrate_rhs(rhs, t1, first.back(), t2, cfg);
  CHECK((direct.back() - second.back()).norm() <= 10 * cfg.abs_tol * (1 + z.norm()));
}

TEST_CASE("variational flow of a rotation generator is the matrix exponential") {
  Mat a(2, 2);
  a << 0, 1, -1, 0;
  const OdeSystem s = testing_support::linear_system(a, [](double) { return Vec::Zero(2); }, 1.0);
  const VariationalFlow vf = variational_flow(s, vec({1.0, 0.0}), 1.0);
  Mat expected(2, 2);
  expected << std::cos(1.0), std::sin(1.0), -std::sin(1.0), std::cos(1.0);
  CHECK((vf.w_end() - expected).norm() <= 1e-8);
}

TEST_CASE("coupled monodromy has multipliers 1, 1, exp(-4 pi), exp(-4 pi)") {
  const auto p = examples::build_coupled({0.5, 1.0});
  for (const Vec& h : {vec({0.0, 0.0}), vec({1.3, 4.4}), vec({5.9, 2.2})}) {
    const VariationalFlow vf = variational_flow(p.sys, p.family.xi(h), kTwoPi,
                                                IntegratorConfig{}.tightened(1e-2));
    Eigen::EigenSolver<Mat> es(vf.w_end());
    std::vector<double> mags;
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(std::abs(es.eigenvalues()[i].imag()) <= 1e-6);
      mags.push_back(es.eigenvalues()[i].real());
    }
    std::sort(mags.begin(), mags.end());
    const double small = std::exp(-4 * kPi);
    CHECK(std::abs(mags[0] - small) <= 1e-6);
    CHECK(std::abs(mags[1] - small) <= 1e-6);
    CHECK(std::abs(mags[2] - 1.0) <= 1e-6);
    CHECK(std::abs(mags[3] - 1.0) <= 1e-6);
  }
}

TEST_CASE("variational matrix is the derivative of the time-T map") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec z = vec({0.3, 0.8, -0.5, 0.9});
  const IntegratorConfig cfg = IntegratorConfig{}.tightened(1e-2);
  const VariationalFlow vf = variational_flow(p.sys, z, kTwoPi, cfg);
  const Mat w = vf.w_end();
  const Vec x0 = vf.trajectory.end();

  SUBCASE("forward difference error is second order") {
    std::vector<double> errs;
    for (double d : {1e-2, 1e-3}) {
      const Vec xd = integrate(p.sys, z + d * Vec::Unit(4, 1), 0.0, kTwoPi, cfg).end();
      errs.push_back((xd - x0 - w.col(1) * d).norm());
    }
    CHECK(errs[1] < errs[0] / 50);
  }
  SUBCASE("central differences of a fixed-grid replay") {
    const Rhs rhs = rhs_of(p.sys, 0.0);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 4; ++j) {
      const Vec e = Vec::Unit(4, j);
      const Vec col = (replay_on_grid(rhs, z + h * e, vf.trajectory.grid()).back() -
                       replay_on_grid(rhs, z - h * e, vf.trajectory.grid()).back()) /
                      (2 * h);
      CHECK((col - w.col(j)).norm() <= 1e-7);
    }
  }
}

TEST_CASE("difference quotient") {
  SUBCASE("vanishes without perturbation") {
    const auto p = examples::build_coupled({0.5, 1.0, true});
    const Vec z = p.family.xi(vec({0.4, 1.0}));
    for (double eps : {0.0, 1e-3, 1e-2}) {
      const DifferenceQuotient y = difference_quotient_flow(p.sys, z, eps);
      CHECK(y.end().norm() == 0.0);
    }
  }
  SUBCASE("converges to the limit equation") {
    const auto p = examples::build_coupled({0.5, 1.0});
    const Vec z = p.family.xi(vec({0.0, 0.0}));
    const IntegratorConfig cfg = IntegratorConfig{}.tightened(1e-2);
    const Vec y0 = difference_quotient_flow(p.sys, z, 0.0, cfg).end();
    std::vector<double> errs;
    for (double eps : {1e-2, 1e-3, 1e-4})
      errs.push_back((difference_quotient_flow(p.sys, z, eps, cfg).end() - y0).norm());
    CHECK(errs[1] < errs[0]);
    CHECK(errs[2] < errs[1]);
    CHECK(errs[0] / errs[1] == doctest::Approx(10.0).epsilon(0.3));
    CHECK(errs[1] / errs[2] == doctest::Approx(10.0).epsilon(0.3));
  }
  SUBCASE("uniform convergence over the time grid") {
    const auto p = examples::build_coupled({0.5, 1.0});
    const Vec z = p.family.xi(vec({0.0, 0.0}));
    const IntegratorConfig cfg = IntegratorConfig{}.tightened(1e-2);
    const DifferenceQuotient lim = difference_quotient_flow(p.sys, z, 0.0, cfg);
    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
      const DifferenceQuotient y = difference_quotient_flow(p.sys, z, eps, cfg);
      double sup = 0.0;
      for (int i = 0; i <= 200; ++i) {
        const double t = kTwoPi * i / 200;
        sup = std::max(sup, (y(t) - lim(t)).norm());
      }
      CHECK(sup < prev);
      prev = sup;
    }
  }
  SUBCASE("constant forcing of the zero field integrates to T b") {
    const Vec b = vec({1.5, -0.25});
    const OdeSystem s =
        testing_support::linear_system(Mat::Zero(2, 2), [b](double) { return b; }, 3.0);
    const DifferenceQuotient y = difference_quotient_flow(s, vec({0.1, 0.2}), 0.0);
    CHECK((y.end() - 3.0 * b).norm() <= 1e-10);
  }
}

TEST_CASE("time-T map is Lipschitz in z uniformly in eps") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec lo = Vec::Constant(4, -1.2), hi = Vec::Constant(4, 1.2);
  std::vector<double> ls;
  for (double eps : {0.0, 0.005, 0.01}) {
    Sampler pick(7);
    double l = 0.0;
    for (int i = 0; i < 12; ++i) {
      const Vec z1 = pick.in_box(lo, hi), z2 = pick.in_box(lo, hi);
      const Vec d = integrate(p.sys, z1, eps, kTwoPi).end() - integrate(p.sys, z2, eps, kTwoPi).end();
      l = std::max(l, d.norm() / (z1 - z2).norm());
    }
    CHECK(std::isfinite(l));
    ls.push_back(l);
  }
  CHECK(ls[2] <= 1.1 * ls[0] + 0.1);
  CHECK(ls[1] <= 1.1 * ls[0] + 0.1);
}

TEST_CASE("coupled field is periodic in t and its Jacobian is consistent") {
  const auto p = examples::build_coupled({0.5, 1.0});
  Sampler rng(3);
  std::vector<Vec> states;
  for (int i = 0; i < 10; ++i) states.push_back(rng.in_box(Vec::Constant(4, -2), Vec::Constant(4, 2)));
  const std::vector<double> times = {0.0, 0.3, 1.7, 4.0};
  const std::vector<double> eps = {0.0, 0.01, 0.1};
  CHECK(periodicity_defect(p.sys, states, times, eps) <= 1e-12);
  CHECK(jacobian_defect(p.sys, states, times, 1e-6) <= 1e-6);
}

TEST_CASE("quotient increment constant is a finite diagnostic") {
  const auto p = examples::build_coupled({0.5, 1.0});
  const double c = quotient_increment_constant(p.sys, p.family.xi(vec({1.0, 2.0})), 0.05, 6, 11);
  CHECK(std::isfinite(c));
  CHECK(c >= 0.0);
}

TEST_CASE("invalid inputs are rejected") {
  const auto p = examples::build_coupled({0.5, 1.0});
  IntegratorConfig bad;
  bad.abs_tol = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(integrate(p.sys, vec({1.0, 2.0}), 0.0, 1.0), std::invalid_argument);
  IntegratorConfig tight;
  tight.max_steps = 3;
  CHECK_THROWS_AS(integrate(p.sys, vec({0, 1, 0, 1}), 0.0, kTwoPi, tight), StepFailure);
}

}  // TEST_SUITE
