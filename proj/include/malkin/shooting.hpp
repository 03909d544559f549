#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "malkin/bifurcation.hpp"

namespace malkin {

struct ShootConfig {
  IntegratorConfig integrator = IntegratorConfig{}.tightened(1e-2);
  double shoot_tol = 1e-9;
  int max_iter = 100;
  int reinit_every = 20;
  double fd_step = 1e-7;
  double eps_max = 0.1;
  double anchor_tol = 1e-2;
  /// Smallest admissible sigma_min / sigma_max of the FD shooting matrix.
  double rcond = 1e-10;
  double dedup_tol = 1e-6;
};

struct PeriodicOrbit {
  double eps = 0.0;
  Vec z;
  double residual = 0.0;  ///< |x(T, z, eps) - z|
  int newton_iters = 0;
  int jacobian_evals = 0;
  std::optional<ZeroRecord> anchor;
};

/// Damped Broyden on x(T, z, eps) - z, FD Jacobian from a fixed-grid replay
/// of the trajectory, re-initialized every reinit_every iterations and
/// whenever the line search stalls. Throws NoConvergence or
/// SingularShootingMatrix.
PeriodicOrbit shoot(const OdeSystem& sys, double eps, const Vec& z_guess,
                    const ShootConfig& cfg = {});

/// |x(T, z, eps) - z| from a fresh integration at tolerance scaled by `factor`.
double verify_orbit(const OdeSystem& sys, const PeriodicOrbit& orbit, const ShootConfig& cfg = {},
                    double factor = 0.1);

struct ContinuationTrace {
  Vec anchor_h;
  Vec anchor_z;  ///< xi(h0)
  std::vector<double> eps_ladder;
  std::vector<PeriodicOrbit> orbits;
  std::vector<double> distances;  ///< |z_eps - xi(h0)|
  double slope = 0.0;             ///< least-squares log-log slope of distance vs eps
  bool converged = false;
  int failed_rung = -1;
  std::string failure;
  /// Polynomial extrapolation of z_eps to eps = 0 through the rungs.
  Vec limit_estimate;
  bool anchor_mismatch = false;
};

/// Shoots down the ladder, first rung from xi(h0), later rungs warm-started.
/// Failures are recorded in the trace rather than thrown.
ContinuationTrace continue_in_eps(const OdeSystem& sys, const PeriodicFamily& family,
                                  const Vec& anchor_h, const std::vector<double>& eps_ladder,
                                  const ShootConfig& cfg = {},
                                  const std::optional<ZeroRecord>& anchor = std::nullopt);

struct UniquenessReport {
  bool unique = false;
  std::vector<Vec> distinct;  ///< converged fixed points, deduplicated
  std::vector<Vec> failed_starts;
  int converged = 0;
  int starts = 0;
};

/// Multistart shooting from quasi-random points of the ball of `radius`
/// around orbit.z. Unique iff every start converges back to orbit.z.
UniquenessReport local_uniqueness_probe(const OdeSystem& sys, double eps,
                                        const PeriodicOrbit& orbit, double radius, int starts,
                                        const ShootConfig& cfg = {}, std::uint64_t seed = 1);

}  // namespace malkin
