#include "malkin/lyapunov_schmidt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "malkin/errors.hpp"
#include "malkin/sampling.hpp"

namespace malkin {

void LsProblem::finalize() { s_inv = s.inverse(); }

Vec LsProblem::compose(const Vec& alpha, const Vec& beta) const {
  Vec ab(n);
  ab.head(k) = alpha;
  ab.tail(n - k) = beta;
  return s * ab;
}

Vec LsProblem::f(const Vec& z, double eps) const {
  Vec out = p(z);
  if (eps != 0.0) out += eps * q(z, eps);
  return out;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x, const Vec& fx,
                double step) {
  Mat jac(fx.size(), x.size());
  Vec xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    jac.col(j) = (fn(xp) - fx) / h;
    xp[j] = x[j];
  }
  return jac;
}

namespace {

struct NewtonResult {
  Vec beta;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

NewtonResult newton_beta(const LsProblem& prob, const Vec& alpha, double eps, Vec beta,
                         const LsConfig& cfg) {
  const int m = prob.n - prob.k;
  auto r = [&](const Vec& b) -> Vec { return prob.f(prob.compose(alpha, b), eps).tail(m); };
  const double tol = cfg.branch_tol * prob.residual_scale;
  NewtonResult out;
  Vec rv = r(beta);
  double rn = rv.norm();
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (rn <= tol) {
      out.converged = true;
      break;
    }
    const Mat jac = fd_jacobian(r, beta, rv, cfg.fd_step);
    const Vec step = jac.colPivHouseholderQr().solve(-rv);
    double lambda = 1.0;
    Vec trial = beta + step;
    Vec rt = r(trial);
    while (rt.norm() > (1.0 - 1e-4 * lambda) * rn && lambda > 1.0 / 1024.0) {
      lambda *= 0.5;
      trial = beta + lambda * step;
      rt = r(trial);
    }
    out.iterations = it + 1;
    if (rt.norm() >= rn) break;  // no decrease along the Newton direction
    beta = trial;
    rv = rt;
    rn = rt.norm();
  }
  out.converged = out.converged || rn <= tol;
  out.beta = beta;
  out.residual = rn;
  return out;
}

}  // namespace

BranchPoint solve_branch(const LsProblem& prob, const Vec& alpha, double eps,
                         const LsConfig& cfg) {
  const int m = prob.n - prob.k;
  BranchPoint bp;
  bp.alpha = alpha;
  bp.eps = eps;
  const Vec b0 = prob.beta0(alpha);
  if (m == 0) {
    bp.beta = Vec(0);
    bp.mu = Vec(0);
    return bp;
  }
  if (eps == 0.0) {
    bp.beta = b0;
    bp.residual = prob.f(prob.on_graph(alpha), 0.0).tail(m).norm();
    const BranchPoint probe = solve_branch(prob, alpha, cfg.eps_probe, cfg);
    bp.mu = probe.mu;
    bp.mu_approximate = true;
    return bp;
  }
  const NewtonResult res = newton_beta(prob, alpha, eps, b0, cfg);
  if (!res.converged)
    throw NoConvergence("branch solve did not converge: residual " +
                        std::to_string(res.residual) + " after " +
                        std::to_string(res.iterations) + " iterations");
  bp.beta = res.beta;
  bp.mu = (res.beta - b0) / eps;
  bp.residual = res.residual;
  bp.iterations = res.iterations;

  if (cfg.multistart) {
    for (int j = 0; j < 2 * m; ++j) {
      Vec start = b0;
      start[j / 2] += (j % 2 == 0 ? 0.5 : -0.5) * cfg.delta0;
      const NewtonResult other = newton_beta(prob, alpha, eps, start, cfg);
      if (!other.converged || (other.beta - b0).norm() > cfg.delta0) continue;
      if ((other.beta - res.beta).norm() > 1e-6 * std::max(1.0, res.beta.norm()))
        bp.non_unique = true;
    }
  }
  return bp;
}

Vec reduced_function(const LsProblem& prob, const Vec& alpha, double eps, const LsConfig& cfg) {
  const BranchPoint bp = solve_branch(prob, alpha, eps, cfg);
  return prob.f(prob.compose(alpha, bp.beta), eps).head(prob.k) / eps;
}

Vec q_hat(const LsProblem& prob, const Vec& alpha) {
  return prob.q(prob.on_graph(alpha), 0.0).head(prob.k);
}

LsCheck check_problem(const LsProblem& prob, const std::vector<Vec>& alphas,
                      const LsConfig& cfg) {
  const int n = prob.n, k = prob.k;
  LsCheck out;
  out.min_det_delta = 1e300;
  for (const Vec& a : alphas) {
    const Vec z = prob.on_graph(a);
    const Vec pz = prob.p(z);
    out.p_residual = std::max(out.p_residual, pz.norm());
    const Mat dp = prob.dp ? prob.dp(z) : fd_jacobian(prob.p, z, pz, cfg.fd_step);
    const Mat ds = dp * prob.s;
    if (k < n) {
      out.top_right = std::max(out.top_right, ds.topRightCorner(k, n - k).norm());
      out.min_det_delta =
          std::min(out.min_det_delta, std::abs(ds.bottomRightCorner(n - k, n - k).determinant()));
    } else {
      out.min_det_delta = std::min(out.min_det_delta, 1.0);
    }
  }
  out.ok = out.p_residual <= cfg.zero_tol * prob.residual_scale &&
           out.top_right <= cfg.block_tol * prob.residual_scale &&
           out.min_det_delta > cfg.delta_tol;
  return out;
}

double increment_constant(const LsProblem& prob, const Vec& alpha0, double delta, int samples,
                          std::uint64_t seed) {
  Sampler rng(seed);
  const Vec z0 = prob.on_graph(alpha0);
  const double reach = delta / std::max(1.0, prob.s.norm());
  auto graph_point = [&]() -> Vec {
    for (int tries = 0; tries < 1000; ++tries) {
      const Vec z = prob.on_graph(rng.in_ball(alpha0, reach));
      if ((z - z0).norm() <= delta) return z;
    }
    return z0;
  };
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec z1 = graph_point();
    const Vec z2 = graph_point();
    const double gap = (z1 - z2).norm();
    if (gap == 0.0) continue;
    const Vec d = rng.in_ball(Vec::Zero(prob.n), delta);
    const double eps = rng.uniform(0.0, delta);
    const Vec num = (prob.q(z1 + d, eps) - prob.q(z1, 0.0) - prob.q(z2 + d, eps) + prob.q(z2, 0.0))
                        .head(prob.k);
    worst = std::max(worst, num.norm() / gap);
  }
  return worst;
}

}  // namespace malkin
