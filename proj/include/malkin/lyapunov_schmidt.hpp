#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "malkin/types.hpp"

namespace malkin {

/// F(z, eps) = P(z) + eps Q(z, eps) with P vanishing on the graph
/// Z = { S (alpha; beta0(alpha)) : alpha in V }.
struct LsProblem {
  int n = 0;
  int k = 0;
  std::function<Vec(const Vec& z)> p;
  std::function<Mat(const Vec& z)> dp;  ///< optional; finite differences otherwise
  std::function<Vec(const Vec& z, double eps)> q;
  Mat s;
  Mat s_inv;
  Vec v_center;
  double v_radius = 0.0;
  std::function<Vec(const Vec& alpha)> beta0;
  /// Size of the lower block of dP S; residuals of the complement equation
  /// are judged relative to it so that branch_tol bounds the error in beta.
  double residual_scale = 1.0;

  /// Fills s_inv from s.
  void finalize();
  [[nodiscard]] Vec compose(const Vec& alpha, const Vec& beta) const;
  [[nodiscard]] Vec f(const Vec& z, double eps) const;
  [[nodiscard]] Vec on_graph(const Vec& alpha) const { return compose(alpha, beta0(alpha)); }
};

struct LsConfig {
  int max_iter = 50;
  double branch_tol = 1e-10;
  double eps_probe = 1e-6;
  double delta0 = 0.1;  ///< radius around beta0(alpha) for the branch and multistart
  double fd_step = 1e-7;
  bool multistart = false;
  double zero_tol = 1e-8;
  double block_tol = 1e-8;
  double delta_tol = 1e-10;
};

struct BranchPoint {
  Vec alpha;
  double eps = 0.0;
  Vec beta;
  Vec mu;  ///< (beta - beta0) / eps; at eps = 0 from a probe at eps_probe
  double residual = 0.0;
  int iterations = 0;
  bool mu_approximate = false;
  bool non_unique = false;  ///< multistart found another zero within delta0
};

/// Solves pi_perp F(S (alpha; beta), eps) = 0 for beta near beta0(alpha) by
/// damped Newton with a finite-difference Jacobian. Throws NoConvergence.
BranchPoint solve_branch(const LsProblem& prob, const Vec& alpha, double eps,
                         const LsConfig& cfg = {});

/// (1/eps) pi F(S (alpha; beta(alpha, eps)), eps), eps > 0.
Vec reduced_function(const LsProblem& prob, const Vec& alpha, double eps,
                     const LsConfig& cfg = {});

/// pi Q(S (alpha; beta0(alpha)), 0).
Vec q_hat(const LsProblem& prob, const Vec& alpha);

struct LsCheck {
  double p_residual = 0.0;     ///< max |P| on sampled graph points
  double top_right = 0.0;      ///< max norm of the upper-right block of dP S
  double min_det_delta = 0.0;  ///< min |det| of its lower-right block
  bool ok = false;
};

/// Samples the two standing hypotheses on the graph over V.
LsCheck check_problem(const LsProblem& prob, const std::vector<Vec>& alphas,
                      const LsConfig& cfg = {});

/// Largest sampled
///   |pi Q(z1 + d, eps) - pi Q(z1, 0) - pi Q(z2 + d, eps) + pi Q(z2, 0)| / |z1 - z2|
/// over z1, z2 on the graph within delta of S (alpha0; beta0(alpha0)),
/// eps in [0, delta], |d| <= delta. Diagnostic for one delta only.
double increment_constant(const LsProblem& prob, const Vec& alpha0, double delta, int samples,
                          std::uint64_t seed);

/// Finite-difference Jacobian of `fn` at x (forward differences).
Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x, const Vec& fx,
                double step);

}  // namespace malkin
