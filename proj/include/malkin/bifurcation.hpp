#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "malkin/linear_periodic.hpp"
#include "malkin/lyapunov_schmidt.hpp"
#include "malkin/quadrature.hpp"

namespace malkin {

struct BifConfig {
  QuadratureConfig quad;
  double zero_tol = 1e-8;
  double check_tol = 1e-6;
  double family_tol = 1e-7;
  double dedup_tol = 1e-4;
  double fd_step = 1e-6;
  int grid_density = 64;
  int newton_max_iter = 100;
  /// |det J| below this fraction of |J|^k counts as sign 0.
  double det_rel_tol = 1e-4;
  /// Initial samples per box edge for winding numbers.
  int edge_samples = 64;
  int max_refine_level = 16;
};

/// Axis-aligned box in R^k.
struct Box {
  Vec lo;
  Vec hi;

  [[nodiscard]] int dim() const { return static_cast<int>(lo.size()); }
  [[nodiscard]] Vec center() const { return 0.5 * (lo + hi); }
  [[nodiscard]] bool contains(const Vec& p) const;
  static Box around(const Vec& c, double radius);
};

enum class BifKind { kMalkin, kReduced, kCustom };

/// A map R^k -> R^k together with what the zero finder needs to know about
/// its domain.
struct BifFunction {
  BifKind kind = BifKind::kCustom;
  int k = 0;
  std::function<Vec(const Vec&)> eval;
  /// Coordinates that are 2pi-periodic angles.
  std::vector<bool> angular;

  Vec operator()(const Vec& h) const { return eval(h); }
};

struct MalkinValue {
  Vec value;
  double quad_error = 0.0;
  long evaluations = 0;
  bool frame_valid = false;
};

/// Int_0^T ( <u_i(s,h), g(s, x(s, xi(h), 0), 0)> )_i ds by adaptive
/// composite Gauss-Legendre.
MalkinValue eval_malkin_detail(const OdeSystem& sys, const PeriodicFamily& family,
                               const ReductionFrame& frame, const Vec& h,
                               const QuadratureConfig& quad = {});
Vec eval_malkin(const OdeSystem& sys, const PeriodicFamily& family, const ReductionFrame& frame,
                const Vec& h, const QuadratureConfig& quad = {});

/// Solution of pi S^-1 xi(h) = alpha near h_star and the induced graph
/// beta0(alpha) = pi_perp S^-1 xi(h~(alpha)).
class Reparametrization {
 public:
  Reparametrization() = default;
  Reparametrization(PeriodicFamily family, ReductionFrame frame, Vec h_star, double v_radius);

  [[nodiscard]] const Vec& h_star() const { return h_star_; }
  [[nodiscard]] const Vec& alpha_star() const { return alpha_star_; }
  [[nodiscard]] double v_radius() const { return v_radius_; }
  [[nodiscard]] const Mat& psi_star() const { return psi_star_; }
  [[nodiscard]] const ReductionFrame& frame() const { return frame_; }
  [[nodiscard]] const PeriodicFamily& family() const { return family_; }

  /// Newton solve to 1e-12. Throws NoConvergence.
  [[nodiscard]] Vec h_tilde(const Vec& alpha) const;
  [[nodiscard]] Vec beta0(const Vec& alpha) const;
  [[nodiscard]] Vec alpha_of_h(const Vec& h) const;

 private:
  PeriodicFamily family_;
  ReductionFrame frame_;
  Vec h_star_;
  Vec alpha_star_;
  Mat psi_star_;
  double v_radius_ = 0.0;
};

/// Throws PsiSingular if |det Psi(h_star)| <= delta_tol. The radius of V is
/// the largest of {max_radius, max_radius/2, ...} for which Newton converges
/// at every sampled alpha and h~ stays injective on the samples.
Reparametrization reparametrize(const PeriodicFamily& family, const ReductionFrame& frame,
                                const Vec& h_star, double max_radius = 0.5);

/// pi Y^-1(T, z) y(T, z, 0) at z = S (alpha; beta0(alpha)), with the adjoint
/// kernel taken directly from the monodromy at z and y from the
/// inhomogeneous variational equation.
Vec eval_g(const OdeSystem& sys, const Reparametrization& reparam, const Vec& alpha,
           const LinearPeriodicConfig& cfg = {});

/// F(z, eps) = Y^-1(T, z~) (x(T, z, eps) - z) where z~ = xi(h~(pi S^-1 z)).
LsProblem periodic_ls_problem(const OdeSystem& sys, const Reparametrization& reparam);

BifFunction malkin_function(const OdeSystem& sys, const PeriodicFamily& family,
                            const ReductionFrame& frame, std::vector<bool> angular,
                            const BifConfig& cfg = {});
BifFunction g_function(const OdeSystem& sys, const Reparametrization& reparam,
                       const LinearPeriodicConfig& cfg = {});

struct ZeroRecord {
  Vec location;
  double residual = 0.0;
  Mat jac_fd;
  int jac_det_sign = 0;
  double jac_det = 0.0;
  bool isolated = false;
  int local_degree = 0;  ///< meaningful when isolated
  int newton_iters = 0;
};

struct ZeroSearch {
  std::vector<ZeroRecord> zeros;
  /// Min |M| over grid nodes of cells that contain no reported zero.
  double grid_min_without_zero = 0.0;
  long grid_nodes = 0;
  long candidate_cells = 0;
  bool non_isolated = false;
  std::string non_isolated_reason;
};

ZeroSearch find_zeros(const BifFunction& bf, const Box& region, const BifConfig& cfg = {});

/// Central FD Jacobian with step `step`.
Mat central_jacobian(const BifFunction& bf, const Vec& h, double step);

struct DegreeCertificate {
  Box region;
  int degree = 0;
  double boundary_min = 0.0;
  long samples = 0;
  std::string method;  ///< "boundary-signs", "winding", "regular-zeros-only"
};

/// Throws BoundaryZero / SingularZero.
DegreeCertificate brouwer_degree(const BifFunction& bf, const Box& region,
                                 const BifConfig& cfg = {});

struct DilationEstimate {
  Vec center;
  double radius = 0.0;
  double l_lower = 0.0;
  long pairs = 0;
  Vec arg_h1;
  Vec arg_h2;
};

DilationEstimate dilation_estimate(const BifFunction& bf, const Vec& center, double radius,
                                   int pairs, std::uint64_t seed = 1);

/// Gauss-Newton projection of z onto the family starting from h_guess.
struct FamilyProjection {
  Vec h;
  double distance = 0.0;
};
FamilyProjection project_to_family(const PeriodicFamily& family, const Vec& z,
                                   const Vec& h_guess);

struct NecessaryCheck {
  bool holds = false;
  Vec h;
  double distance_to_family = 0.0;
  double value_norm = 0.0;
  double tolerance = 0.0;
};

/// Whether |M(h)| <= check_tol at the h with xi(h) = z_limit. Throws
/// NotOnFamily if z_limit is farther than family_tol from the family.
NecessaryCheck necessary_condition_check(const BifFunction& bf, const PeriodicFamily& family,
                                         const Vec& z_limit, const Vec& h_guess,
                                         const BifConfig& cfg = {});

}  // namespace malkin
