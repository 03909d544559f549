#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "malkin/types.hpp"

namespace malkin {

using ConstRefVec = Eigen::Ref<const Vec>;
using RefVec = Eigen::Ref<Vec>;
using RefMat = Eigen::Ref<Mat>;

/// T-periodically forced system  x' = f(t,x) + eps * g(t,x,eps).
///
/// All callbacks write into caller-owned storage so that augmented systems
/// (variational, adjoint, quotient) can evaluate them on sub-blocks of a
/// larger state without copies.
struct OdeSystem {
  using Field = std::function<void(double t, const ConstRefVec& x, RefVec out)>;
  using Jacobian = std::function<void(double t, const ConstRefVec& x, RefMat out)>;
  using Perturbation =
      std::function<void(double t, const ConstRefVec& x, double eps, RefVec out)>;

  int n = 0;
  double period = 0.0;
  Field f;
  Jacobian df;
  Perturbation g;

  /// Evaluates f + eps*g.
  void full_field(double t, const ConstRefVec& x, double eps, RefVec out) const;
};

struct IntegratorConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = 1.0;
  double min_step = 1e-14;
  std::int64_t max_steps = 10'000'000;
  /// Blowup is raised once the max-norm of the state exceeds this bound.
  double blowup_bound = 1e10;

  void validate() const;
  /// Same config with both tolerances scaled by `factor`.
  [[nodiscard]] IntegratorConfig tightened(double factor) const;
};

/// Piecewise-quartic continuous extension of an embedded Dormand-Prince run.
///
/// Node states are stored verbatim, so evaluating at a grid node returns the
/// stored state bit-for-bit. Between nodes the 4th-order Hairer extension is
/// used; it matches state and derivative at both ends of each step.
class DenseSolution {
 public:
  DenseSolution() = default;

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] double t_begin() const { return grid_.front(); }
  [[nodiscard]] double t_end() const { return grid_.back(); }
  [[nodiscard]] const std::vector<double>& grid() const { return grid_; }
  [[nodiscard]] std::size_t steps() const { return grid_.empty() ? 0 : grid_.size() - 1; }
  [[nodiscard]] Vec node(std::size_t i) const { return nodes_.col(static_cast<Eigen::Index>(i)); }
  [[nodiscard]] Vec back() const { return nodes_.col(nodes_.cols() - 1); }

  [[nodiscard]] Vec operator()(double t) const;
  void eval(double t, RefVec out) const;
  /// Evaluates only components [offset, offset + out.size()).
  void eval_block(double t, Eigen::Index offset, RefVec out) const;
  /// Time derivative of the interpolant.
  [[nodiscard]] Vec derivative(double t) const;

  /// Components [offset, offset+count) as an independent solution.
  [[nodiscard]] DenseSolution slice(Eigen::Index offset, Eigen::Index count) const;

 private:
  friend class DenseBuilder;

  std::size_t locate(double t) const;

  int dim_ = 0;
  std::vector<double> grid_;
  Mat nodes_;   // dim x (steps+1)
  Mat coeffs_;  // dim x (4*steps): continuous-extension coefficients per step
};

using Rhs = std::function<void(double t, const Vec& y, Vec& dy)>;

/// Adaptive Dormand-Prince 5(4) with PI step control and dense output on
/// [t0, t_end], t_end > t0. Throws StepFailure / Blowup.
DenseSolution integrate_rhs(const Rhs& rhs, double t0, const Vec& y0, double t_end,
                            const IntegratorConfig& cfg);

/// Fixed-step Dormand-Prince 5 along a prescribed grid. Used to obtain a
/// time-T map that is smooth in the initial state (no step-size switching),
/// which keeps finite-difference Jacobians clean.
DenseSolution replay_on_grid(const Rhs& rhs, const Vec& y0, std::span<const double> grid);

/// Solution x(., z, eps) of the forced system on [0, t_end].
struct Trajectory {
  Vec z;
  double eps = 0.0;
  DenseSolution path;

  [[nodiscard]] const std::vector<double>& grid() const { return path.grid(); }
  [[nodiscard]] Vec operator()(double t) const { return path(t); }
  [[nodiscard]] Vec end() const { return path.back(); }
};

Trajectory integrate(const OdeSystem& sys, const Vec& z, double eps, double t_end,
                     const IntegratorConfig& cfg = {});

/// Unperturbed trajectory together with W(t) = dx/dz(t, z, 0), W(0) = I.
struct VariationalFlow {
  Trajectory trajectory;
  DenseSolution w_path;  // n*n components, column-major

  [[nodiscard]] Mat w(double t) const;
  [[nodiscard]] Mat w_end() const;
};

VariationalFlow variational_flow(const OdeSystem& sys, const Vec& z, double t_end,
                                 const IntegratorConfig& cfg = {});

/// y(t, z, eps) = [x(t,z,eps) - x(t,z,0)] / eps for eps > 0, and the solution of
///   y' = Df(t, x(t,z,0)) y + g(t, x(t,z,0), 0),  y(0) = 0
/// for eps = 0.
class DifferenceQuotient {
 public:
  DifferenceQuotient(double eps, Trajectory perturbed, Trajectory base);
  DifferenceQuotient(DenseSolution limit, Trajectory base);

  [[nodiscard]] double eps() const { return eps_; }
  [[nodiscard]] bool is_limit() const { return eps_ == 0.0; }
  [[nodiscard]] Vec operator()(double t) const;
  [[nodiscard]] Vec end() const;
  [[nodiscard]] const Trajectory& base() const { return base_; }
  /// Union of the time grids of the underlying integrations.
  [[nodiscard]] std::vector<double> grid() const;

 private:
  double eps_ = 0.0;
  Trajectory base_;
  Trajectory perturbed_;
  DenseSolution limit_;
};

DifferenceQuotient difference_quotient_flow(const OdeSystem& sys, const Vec& z, double eps,
                                            const IntegratorConfig& cfg = {});

/// Sampled check that f and g are T-periodic in t. Returns the largest
/// discrepancy observed.
double periodicity_defect(const OdeSystem& sys, std::span<const Vec> states,
                          std::span<const double> times, std::span<const double> eps_values);

/// Largest deviation between df and a central finite-difference Jacobian of f.
double jacobian_defect(const OdeSystem& sys, std::span<const Vec> states,
                       std::span<const double> times, double step);

/// Sampled left-hand side constant of the quotient increment bound: the largest
///   |y(T,z1+d,eps) - y(T,z1,0) - y(T,z2+d,eps) + y(T,z2,0)| / |z1 - z2|
/// over random z1, z2 in B_delta(z0), d in B_delta(0), eps in [0, delta].
/// This is a diagnostic, not a certificate.
double quotient_increment_constant(const OdeSystem& sys, const Vec& z0, double delta,
                                   int samples, std::uint64_t seed,
                                   const IntegratorConfig& cfg = {});

}  // namespace malkin
