#include "malkin/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "malkin/errors.hpp"
#include "malkin/parallel.hpp"
#include "malkin/sampling.hpp"

namespace malkin {

namespace {

Rhs full_rhs(const OdeSystem& sys, double eps) {
  return [&sys, eps](double t, const Vec& y, Vec& dy) { sys.full_field(t, y, eps, dy); };
}

struct Residual {
  Vec r;
  std::vector<double> grid;
};

Residual displacement(const OdeSystem& sys, double eps, const Vec& z, const ShootConfig& cfg) {
  const Trajectory tr = integrate(sys, z, eps, sys.period, cfg.integrator);
  return {tr.end() - z, tr.grid()};
}

// Failed integrations count as an infinite residual.
Residual trial_displacement(const OdeSystem& sys, double eps, const Vec& z, const ShootConfig& cfg) {
  try {
    return displacement(sys, eps, z, cfg);
  } catch (const Error&) {
    return {Vec::Constant(z.size(), std::numeric_limits<double>::infinity()), {}};
  }
}

// (dx/dz)(T) - I by forward differences of a fixed-grid replay, which is a
// smooth function of z.
Mat shooting_matrix(const OdeSystem& sys, double eps, const Vec& z,
                    const std::vector<double>& grid, const ShootConfig& cfg) {
  const Rhs rhs = full_rhs(sys, eps);
  const Vec base = replay_on_grid(rhs, z, grid).back();
  const auto n = z.size();
  Mat jac(n, n);
  Vec zp = z;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = cfg.fd_step * std::max(1.0, std::abs(z[j]));
    zp[j] = z[j] + h;
    jac.col(j) = (replay_on_grid(rhs, zp, grid).back() - base) / h;
    jac(j, j) -= 1.0;
    zp[j] = z[j];
  }
  return jac;
}

}  // namespace

PeriodicOrbit shoot(const OdeSystem& sys, double eps, const Vec& z_guess, const ShootConfig& cfg) {
  PeriodicOrbit orbit;
  orbit.eps = eps;
  Vec z = z_guess;
  Residual res = displacement(sys, eps, z, cfg);
  double rn = res.r.norm();
  Mat jac;
  int since_reinit = 0;
  bool fresh = false;
  // Aim below shoot_tol; accept shoot_tol once progress stops.
  const double target = 0.01 * cfg.shoot_tol;
  auto finish = [&](int it) {
    orbit.z = z;
    orbit.residual = rn;
    orbit.newton_iters = it;
    return orbit;
  };
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    if (rn <= target) return finish(it);
    if (jac.size() == 0 || since_reinit >= cfg.reinit_every) {
      jac = shooting_matrix(sys, eps, z, res.grid, cfg);
      ++orbit.jacobian_evals;
      since_reinit = 0;
      fresh = true;
    }
    Eigen::JacobiSVD<Mat> svd(jac, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec& sv = svd.singularValues();
    if (fresh && !(sv[sv.size() - 1] > cfg.rcond * sv[0])) {
      if (rn <= cfg.shoot_tol) return finish(it);
      throw SingularShootingMatrix("shooting matrix is rank deficient: sigma_min/sigma_max = " +
                                   std::to_string(sv[sv.size() - 1] / sv[0]));
    }
    svd.setThreshold(cfg.rcond);
    const Vec step = svd.solve(-res.r);

    double lambda = 1.0;
    Vec trial = z + step;
    Residual tr = trial_displacement(sys, eps, trial, cfg);
    while (!(tr.r.norm() < (1.0 - 1e-4 * lambda) * rn) && lambda > 1.0 / 64.0) {
      lambda *= 0.5;
      trial = z + lambda * step;
      tr = trial_displacement(sys, eps, trial, cfg);
    }
    if (fresh && lambda < 0.25 && step.norm() <= 0.1 * std::max(1.0, z.norm())) {
      // Curved valley around a family of orbits: the straight step leaves it
      // to second order while the kernel directions rotate. Watchdog: take
      // the full step anyway, correct with fresh Newton steps, keep the
      // result if it beats the damped step.
      Vec w = z + step;
      Residual wr = trial_displacement(sys, eps, w, cfg);
      Mat wj;
      for (int c = 0; c < 3 && std::isfinite(wr.r.norm()); ++c) {
        wj = shooting_matrix(sys, eps, w, wr.grid, cfg);
        ++orbit.jacobian_evals;
        w += Eigen::JacobiSVD<Mat>(wj, Eigen::ComputeThinU | Eigen::ComputeThinV)
                 .setThreshold(cfg.rcond)
                 .solve(-wr.r);
        wr = trial_displacement(sys, eps, w, cfg);
        if (wr.r.norm() < (1.0 - 1e-4) * rn) break;
      }
      if (wr.r.norm() < std::min(tr.r.norm(), (1.0 - 1e-4) * rn)) {
        z = w;
        res = std::move(wr);
        rn = res.r.norm();
        jac = wj;
        since_reinit = 0;
        continue;
      }
    }
    if (!(tr.r.norm() < rn) && fresh) {
      // Near-singular Jacobian: fall back to Levenberg-Marquardt steps.
      const Vec ur = svd.matrixU().transpose() * res.r;
      for (double mu = 1e-10 * sv[0] * sv[0]; mu <= sv[0] * sv[0]; mu *= 100.0) {
        const Vec scaled = (sv.array() / (sv.array().square() + mu)).matrix().cwiseProduct(ur);
        const Vec lm = z - svd.matrixV() * scaled;
        Residual lr = trial_displacement(sys, eps, lm, cfg);
        if (lr.r.norm() < (1.0 - 1e-4) * rn) {
          trial = lm;
          tr = std::move(lr);
          break;
        }
      }
      if (!(tr.r.norm() < rn)) break;
    }
    if (!(tr.r.norm() < rn)) {
      // Stale Broyden matrix: rebuild from finite differences and retry.
      since_reinit = cfg.reinit_every;
      continue;
    }
    const Vec dz = trial - z;
    const Vec dr = tr.r - res.r;
    jac += (dr - jac * dz) * dz.transpose() / dz.squaredNorm();
    fresh = false;
    ++since_reinit;
    z = trial;
    res = std::move(tr);
    rn = res.r.norm();
  }
  if (rn <= cfg.shoot_tol) return finish(it);
  throw NoConvergence("shooting did not converge: residual " + std::to_string(rn));
}

double verify_orbit(const OdeSystem& sys, const PeriodicOrbit& orbit, const ShootConfig& cfg,
                    double factor) {
  const Trajectory tr =
      integrate(sys, orbit.z, orbit.eps, sys.period, cfg.integrator.tightened(factor));
  return (tr.end() - orbit.z).norm();
}

namespace {

// Neville extrapolation of z(eps) to eps = 0.
Vec extrapolate_to_zero(const std::vector<double>& eps, const std::vector<Vec>& z) {
  std::vector<Vec> p = z;
  const std::size_t m = p.size();
  for (std::size_t level = 1; level < m; ++level)
    for (std::size_t i = 0; i + level < m; ++i) {
      const double a = eps[i], b = eps[i + level];
      p[i] = (b * p[i] - a * p[i + 1]) / (b - a);
    }
  return p[0];
}

}  // namespace

ContinuationTrace continue_in_eps(const OdeSystem& sys, const PeriodicFamily& family,
                                  const Vec& anchor_h, const std::vector<double>& eps_ladder,
                                  const ShootConfig& cfg, const std::optional<ZeroRecord>& anchor) {
  ContinuationTrace trace;
  trace.anchor_h = anchor_h;
  trace.anchor_z = family.xi(anchor_h);
  trace.eps_ladder = eps_ladder;
  for (std::size_t i = 1; i < eps_ladder.size(); ++i)
    if (!(eps_ladder[i] < eps_ladder[i - 1])) throw ConfigError("eps ladder must be strictly decreasing");
  if (!eps_ladder.empty() && (eps_ladder.front() > cfg.eps_max || eps_ladder.back() <= 0.0))
    throw ConfigError("eps ladder must lie in (0, eps_max]");

  Vec guess = trace.anchor_z;
  for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
    try {
      PeriodicOrbit orbit = shoot(sys, eps_ladder[i], guess, cfg);
      orbit.anchor = anchor;
      guess = orbit.z;
      trace.distances.push_back((orbit.z - trace.anchor_z).norm());
      trace.orbits.push_back(std::move(orbit));
    } catch (const Error& e) {
      trace.failed_rung = static_cast<int>(i);
      trace.failure = "rung " + std::to_string(i) + " (eps = " + std::to_string(eps_ladder[i]) +
                      "): " + e.what();
      return trace;
    }
  }
  trace.converged = true;
  if (trace.orbits.empty()) return trace;

  std::vector<Vec> zs;
  for (const PeriodicOrbit& o : trace.orbits) zs.push_back(o.z);
  trace.limit_estimate = extrapolate_to_zero(eps_ladder, zs);
  trace.anchor_mismatch = (trace.limit_estimate - trace.anchor_z).norm() > cfg.anchor_tol;

  const bool positive = std::all_of(trace.distances.begin(), trace.distances.end(),
                                    [](double d) { return d > 0.0; });
  if (positive && trace.distances.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(trace.distances.size());
    for (std::size_t i = 0; i < trace.distances.size(); ++i) {
      const double x = std::log(eps_ladder[i]), y = std::log(trace.distances[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    trace.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return trace;
}

UniquenessReport local_uniqueness_probe(const OdeSystem& sys, double eps,
                                        const PeriodicOrbit& orbit, double radius, int starts,
                                        const ShootConfig& cfg, std::uint64_t seed) {
  const int n = static_cast<int>(orbit.z.size());
  std::vector<Vec> points;
  for (std::uint64_t idx = seed; static_cast<int>(points.size()) < starts; ++idx) {
    const Vec u = 2.0 * halton(idx, n).array() - 1.0;
    if (u.norm() <= 1.0) points.push_back(orbit.z + radius * u);
  }
  std::vector<std::optional<Vec>> found(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    try {
      found[i] = shoot(sys, eps, points[i], cfg).z;
    } catch (const Error&) {
    }
  });

  UniquenessReport rep;
  rep.starts = starts;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!found[i]) {
      rep.failed_starts.push_back(points[i]);
      continue;
    }
    ++rep.converged;
    const Vec& z = *found[i];
    const bool seen = std::any_of(rep.distinct.begin(), rep.distinct.end(),
                                  [&](const Vec& q) { return (q - z).norm() < cfg.dedup_tol; });
    if (!seen) rep.distinct.push_back(z);
  }
  rep.unique = rep.failed_starts.empty() && rep.distinct.size() == 1 &&
               (rep.distinct.front() - orbit.z).norm() < cfg.dedup_tol;
  return rep;
}

}  // namespace malkin
