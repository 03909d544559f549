// End-to-end acceptance checks. One line per criterion; nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "malkin/bifurcation.hpp"
#include "malkin/errors.hpp"
#include "malkin/examples.hpp"
#include "malkin/lyapunov_schmidt.hpp"
#include "malkin/pipeline.hpp"
#include "malkin/shooting.hpp"
#include "support.hpp"

using namespace malkin;
using testing_support::vec;

namespace {

constexpr double kMalkinTol = 1e-7;
constexpr double kZeroLocTol = 1e-5;
constexpr double kMultiplierTol = 1e-6;
constexpr double kAngleTol = 1e-6;
constexpr double kDriftTol = 1e-8;
constexpr double kResidualTol = 1e-9;
constexpr double kSlopeLo = 0.8, kSlopeHi = 1.2;
constexpr double kUniqRadius = 0.05;
constexpr int kUniqStarts = 64;
constexpr double kBranchTol = 1e-10;
constexpr double kQuotientFactor = 5.0;
constexpr double kAnchorGap = 1e-2;
const std::vector<double> kLadder = {1e-2, 1e-3, 1e-4};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Outcome closed_form_match() {
  double worst = 0.0;
  for (double k1 : {0.0, 0.5, 0.9})
    for (double k2 : {0.5, 1.0, 3.0}) {
      const testing_support::Coupled c({k1, k2});
      for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
          const double th = kTwoPi * i / 20, et = kTwoPi * j / 20;
          worst = std::max(worst, (c.malkin(vec({th, et})) - c.oracle.malkin(th, et)).norm());
        }
    }
  return {worst <= kMalkinTol, fmt("max error %.3g over 9 parameter pairs (tol %.0e)", worst, kMalkinTol)};
}

Outcome classification_sweep() {
  struct Case {
    double k1, k2;
  };
  bool ok = true;
  std::string detail;
  for (const Case cs : {Case{0.5, 1.0}, Case{0.0, 0.5}, Case{-0.9, 3.0}, Case{1.0, 1.0},
                        Case{-1.0, 0.5}, Case{2.0, 1.0}, Case{0.5, 0.0}}) {
    const testing_support::Coupled c({cs.k1, cs.k2});
    const ZeroSearch zs = find_zeros(c.malkin, testing_support::square());
    bool case_ok = true;
    if (cs.k2 == 0.0) {
      case_ok = zs.non_isolated;
    } else if (zs.non_isolated || zs.zeros.size() != c.oracle.predicted_zeros.size()) {
      case_ok = false;
    } else {
      for (std::size_t i = 0; i < c.oracle.predicted_zeros.size(); ++i) {
        double best = 1e300;
        const ZeroRecord* hit = nullptr;
        for (const ZeroRecord& z : zs.zeros) {
          const double d = testing_support::torus_distance(z.location, c.oracle.predicted_zeros[i]);
          if (d < best) {
            best = d;
            hit = &z;
          }
        }
        if (!(best <= kZeroLocTol)) case_ok = false;
        if (c.oracle.borderline && hit && !(hit->isolated && hit->local_degree == 0)) case_ok = false;
      }
    }
    ok = ok && case_ok;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s(%g,%g)->%s%zu", detail.empty() ? "" : " ", cs.k1, cs.k2,
                  zs.non_isolated ? "non-isolated " : "", zs.zeros.size());
    detail += buf;
    if (!case_ok) detail += "!";
  }
  return {ok, detail + fmt(" (location tol %.0e)", kZeroLocTol)};
}

Outcome degree_certificates() {
  const auto& c = testing_support::coupled_default();
  bool ok = c.oracle.predicted_zeros.size() == 4;
  std::string pattern;
  for (std::size_t i = 0; i < c.oracle.predicted_zeros.size(); ++i) {
    const Vec& z = c.oracle.predicted_zeros[i];
    const Box box = Box::around(z, 0.3);
    const int deg = brouwer_degree(c.malkin, box).degree;
    const int expect = c.oracle.det_dm(z[0], z[1]) > 0 ? 1 : -1;
    const int independent =
        testing_support::winding_number(c.malkin.eval, box, 2 * BifConfig{}.edge_samples);
    ok = ok && deg == expect && independent == expect && expect == c.oracle.predicted_degrees[i];
    pattern += (i ? "," : "") + std::to_string(deg);
  }
  const int whole = brouwer_degree(c.malkin, testing_support::square()).degree;
  const int whole_ind = testing_support::winding_number(c.malkin.eval, testing_support::square(),
                                                        2 * BifConfig{}.edge_samples);
  ok = ok && whole == 0 && whole_ind == 0;
  return {ok, "local (" + pattern + "), square " + std::to_string(whole) + ", independent winding " +
                  std::to_string(whole_ind) + " (expected +1,-1,-1,+1 and 0)"};
}

double sorted_gap(const MonodromyRecord& r, std::vector<double> expect) {
  std::vector<double> mu;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.multipliers.size(); ++i) {
    mu.push_back(r.multipliers[i].real());
    worst = std::max(worst, std::abs(r.multipliers[i].imag()));
  }
  std::sort(mu.begin(), mu.end());
  std::sort(expect.begin(), expect.end());
  for (std::size_t i = 0; i < mu.size(); ++i) worst = std::max(worst, std::abs(mu[i] - expect[i]));
  return worst;
}

Outcome monodromy_check() {
  const double small = std::exp(-4 * kPi);
  const auto p = examples::build_coupled({0.5, 1.0});
  double worst = 0.0;
  bool mult = true;
  for (const Vec& h : {vec({0.0, 0.0}), vec({kPi / 3, 4 * kPi / 3}), vec({2.0, 5.0})}) {
    const MonodromyRecord r = monodromy(p.sys, p.family, h);
    worst = std::max(worst, sorted_gap(r, {1.0, 1.0, small, small}));
    mult = mult && r.geo_mult_one == 2;
  }
  const auto q = examples::build_planar(0.0, 0.0);
  for (double th : {0.0, 2.0}) {
    const MonodromyRecord r = monodromy(q.sys, q.family, vec({th}));
    worst = std::max(worst, sorted_gap(r, {1.0, small}));
    mult = mult && r.geo_mult_one == 1;
  }
  return {mult && worst <= kMultiplierTol,
          fmt("max multiplier error %.3g (tol %.0e), multiplicities ", worst, kMultiplierTol) +
              (mult ? "2 and 1" : "wrong")};
}

Outcome adjoint_check() {
  const auto p = examples::build_coupled({0.5, 1.0});
  double angle = 0.0, drift = 0.0;
  for (const Vec& h : {vec({0.9, 3.7}), vec({kPi / 3, 4 * kPi / 3})}) {
    const AdjointBasis u = adjoint_periodic_basis(p.sys, p.family, h);
    Mat ref = Mat::Zero(4, 2);
    ref(0, 0) = -std::cos(h[0]);
    ref(1, 0) = std::sin(h[0]);
    ref(2, 1) = -std::cos(h[1]);
    ref(3, 1) = std::sin(h[1]);
    angle = std::max(angle, testing_support::principal_angle(u.initial(), ref));
    const VariationalFlow vf =
        variational_flow(p.sys, p.family.xi(h), kTwoPi, IntegratorConfig{}.tightened(1e-2));
    const Mat p0 = u.at(0.0).transpose() * vf.w(0.0);
    for (int i = 1; i <= 64; ++i) {
      const double t = kTwoPi * i / 64;
      drift = std::max(drift, (u.at(t).transpose() * vf.w(t) - p0).norm());
    }
  }
  return {angle <= kAngleTol && drift <= kDriftTol,
          fmt("principal angle %.3g (tol %.0e), ", angle, kAngleTol) +
              fmt("pairing drift %.3g (tol %.0e)", drift, kDriftTol)};
}

struct BranchSummary {
  bool ok = true;
  double worst_residual = 0.0;
  double slope_min = 1e300, slope_max = -1e300;
  int probes = 0, unique = 0;
};

void follow_branch(const OdeSystem& sys, const PeriodicFamily& family, const Vec& h0,
                   BranchSummary& s) {
  const ContinuationTrace t = continue_in_eps(sys, family, h0, kLadder);
  if (!t.converged || t.orbits.size() != kLadder.size()) {
    s.ok = false;
    return;
  }
  for (std::size_t i = 0; i < t.orbits.size(); ++i) {
    s.worst_residual = std::max(s.worst_residual, t.orbits[i].residual);
    if (i > 0 && !(t.distances[i] < t.distances[i - 1])) s.ok = false;
  }
  s.slope_min = std::min(s.slope_min, t.slope);
  s.slope_max = std::max(s.slope_max, t.slope);
  for (const PeriodicOrbit& o : t.orbits) {
    const UniquenessReport u = local_uniqueness_probe(sys, o.eps, o, kUniqRadius, kUniqStarts);
    ++s.probes;
    if (u.unique) ++s.unique;
  }
  if (!(s.worst_residual <= kResidualTol)) s.ok = false;
}

std::string branch_detail(const BranchSummary& s) {
  std::string d = fmt("residual %.3g (tol %.0e), ", s.worst_residual, kResidualTol);
  d += fmt("slope in [%.3f, %.3f] ", s.slope_min, s.slope_max);
  d += s.slope_min >= kSlopeLo && s.slope_max <= kSlopeHi ? "inside" : "outside";
  d += fmt(" [%.1f, %.1f] (reported), ", kSlopeLo, kSlopeHi);
  d += "unique " + std::to_string(s.unique) + "/" + std::to_string(s.probes);
  return d;
}

Outcome bifurcating_orbits() {
  const auto& c = testing_support::coupled_default();
  BranchSummary s;
  for (const Vec& h0 : c.oracle.predicted_zeros) follow_branch(c.prob.sys, c.prob.family, h0, s);
  const bool pass = s.ok && s.unique == s.probes && s.probes == 12;
  return {pass, "4 anchors, " + branch_detail(s)};
}

Outcome planar_case() {
  const auto p = examples::build_planar(0.0, 0.0);
  const ReductionFrame fr = build_frame(p.sys, p.family, vec({kPi}));
  const BifFunction bf = malkin_function(p.sys, p.family, fr, p.angular);
  const ZeroSearch zs = find_zeros(bf, Box{vec({0.0}), vec({kTwoPi})});
  bool ok = zs.zeros.size() == 2;
  double loc = 0.0;
  if (ok) {
    loc = std::max(std::abs(zs.zeros[0].location[0] - kPi / 2),
                   std::abs(zs.zeros[1].location[0] - 3 * kPi / 2));
    ok = loc <= kZeroLocTol;
  }
  BranchSummary s;
  for (const ZeroRecord& z : zs.zeros) follow_branch(p.sys, p.family, z.location, s);
  ok = ok && s.ok && s.unique == s.probes && s.probes == 6;
  return {ok, std::to_string(zs.zeros.size()) + fmt(" zeros, location error %.3g, ", loc) +
                  branch_detail(s)};
}

Outcome lyapunov_schmidt_toy() {
  constexpr double c = 0.3;
  auto make = [&](std::function<Vec(const Vec&, double)> q) {
    LsProblem p;
    p.n = 2;
    p.k = 1;
    p.p = [](const Vec& z) { return vec({0.0, z[1] - z[0] * z[0]}); };
    p.q = std::move(q);
    p.s = Mat::Identity(2, 2);
    p.v_center = vec({c});
    p.v_radius = 1.0;
    p.beta0 = [](const Vec& a) { return vec({a[0] * a[0]}); };
    p.finalize();
    return p;
  };
  const LsProblem toy = make([&](const Vec& z, double) { return vec({z[0] - c, 1.0}); });
  double branch = 0.0, reduced = 0.0;
  bool within = true;
  for (double eps : kLadder)
    for (double a : {-0.4, 0.1, 0.3, 0.8}) {
      branch = std::max(branch, std::abs(solve_branch(toy, vec({a}), eps).beta[0] - (a * a - eps)));
      const double r = std::abs(reduced_function(toy, vec({a}), eps)[0] - (a - c));
      reduced = std::max(reduced, r / eps);
      within = within && r <= 5 * eps;
    }
  double rate = 0.0;
  for (double eps : kLadder) {
    double a = c;
    for (int it = 0; it < 30; ++it) {
      const double r = reduced_function(toy, vec({a}), eps)[0];
      const double d = (reduced_function(toy, vec({a + 1e-6}), eps)[0] - r) / 1e-6;
      a -= r / d;
    }
    rate = std::max(rate, std::abs(a - c) / eps);
  }
  return {branch <= kBranchTol && within && rate <= 5.0,
          fmt("branch error %.3g (tol %.0e), ", branch, kBranchTol) +
              fmt("max |reduced - (alpha - c)|/eps %.3g (tol 5), zero error/eps %.3g", reduced, rate)};
}

Outcome difference_quotient() {
  const auto p = examples::build_coupled({0.5, 1.0});
  const Vec z = p.family.xi(vec({0.0, 0.0}));
  const IntegratorConfig cfg;
  const Vec y0 = difference_quotient_flow(p.sys, z, 0.0, cfg).end();
  std::vector<double> gaps;
  for (double eps : kLadder) gaps.push_back((difference_quotient_flow(p.sys, z, eps, cfg).end() - y0).norm());
  double worst = 1e300;
  for (std::size_t i = 1; i < gaps.size(); ++i) worst = std::min(worst, gaps[i - 1] / gaps[i]);
  return {worst >= kQuotientFactor,
          fmt("gaps %.3g .. %.3g, ", gaps.front(), gaps.back()) +
              fmt("smallest factor per decade %.3g (need >= %.0f)", worst, kQuotientFactor)};
}

Outcome contrapositive() {
  const auto& c = testing_support::coupled_default();
  const Vec h0 = vec({0.0, 0.0});
  const ContinuationTrace t = continue_in_eps(c.prob.sys, c.prob.family, h0, kLadder);
  double landed = -1.0;
  bool branch_ok = !t.converged;
  if (t.converged) {
    landed = (t.orbits.back().z - t.anchor_z).norm();
    branch_ok = landed > kAnchorGap;
  }
  const NecessaryCheck nc =
      necessary_condition_check(c.malkin, c.prob.family, c.prob.family.xi(h0), h0);
  const std::string how = t.converged ? fmt("landed %.3g from anchor", landed) : "continuation failed";
  return {branch_ok && !nc.holds,
          how + fmt(" (need > %.0e), |M(anchor)| %.3g rejected", kAnchorGap, nc.value_norm) +
              (nc.holds ? " no" : " yes")};
}

Outcome determinism() {
  pipeline::JobConfig cfg;
  cfg.output_dir = (std::filesystem::temp_directory_path() / "malkinkit_acceptance").string();
  const pipeline::RunReport a = pipeline::cmd_analyze(cfg);
  const pipeline::RunReport b = pipeline::cmd_analyze(cfg);
  const bool same = a.body.dump() == b.body.dump() && a.exit_code == b.exit_code;
  return {same && a.exit_code == 0,
          std::string(same ? "identical" : "different") + " reports modulo timing, " +
              std::to_string(a.body["verdicts"].size()) + " verdicts, exit " +
              std::to_string(a.exit_code)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"closed-form Malkin match", closed_form_match},
      {"zero classification sweep", classification_sweep},
      {"degree certificates", degree_certificates},
      {"monodromy", monodromy_check},
      {"adjoint basis", adjoint_check},
      {"bifurcating orbits", bifurcating_orbits},
      {"planar case", planar_case},
      {"Lyapunov-Schmidt engine", lyapunov_schmidt_toy},
      {"difference quotient", difference_quotient},
      {"necessary-condition contrapositive", contrapositive},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("[%s] %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
