#pragma once

#include <functional>
#include <vector>

#include "malkin/ode.hpp"

namespace malkin {

/// k-parameter family h -> xi(h) of initial conditions of T-periodic orbits
/// of the unperturbed system, defined on the closed ball |h - center| <= radius.
struct PeriodicFamily {
  int k = 0;
  Vec center;
  double radius = 0.0;
  std::function<Vec(const Vec& h)> xi;
  std::function<Mat(const Vec& h)> dxi;

  [[nodiscard]] bool contains(const Vec& h) const { return (h - center).norm() <= radius; }
};

/// How the orthonormal adjoint basis at t = 0 is rotated inside the kernel of
/// W_T^* - I. The aligned variants pick the orthogonal change of basis that
/// brings u_i(0) closest (Procrustes) to +/- the columns of Dxi(h), which makes
/// the basis, and hence M(h), a well-defined function of h.
enum class AdjointOrientation { kRaw, kAlongTangent, kAgainstTangent };

struct LinearPeriodicConfig {
  IntegratorConfig integrator = IntegratorConfig{}.tightened(1e-2);
  double kernel_tol = 1e-6;       ///< singular-value threshold, relative to |W_T|
  double periodicity_tol = 1e-7;  ///< family and adjoint periodicity
  double block_tol = 1e-8;        ///< null block of (Y^-1(0) - Y^-1(T)) S, relative
  double delta_tol = 1e-10;       ///< lower bound on |det Delta|
  double rank_tol = 1e-8;         ///< smallest singular value of Dxi
  AdjointOrientation orientation = AdjointOrientation::kAgainstTangent;
};

struct MonodromyRecord {
  Vec h;
  Vec z;
  Mat w_t;                        ///< dx/dz(T, z, 0)
  Eigen::VectorXcd multipliers;   ///< eigenvalues of w_t
  Vec singular_values;            ///< of w_t - I, descending
  int geo_mult_one = 0;
  Mat kernel_basis;               ///< orthonormal basis of ker(W_T - I), n x geo
  Mat adjoint_kernel_basis;       ///< orthonormal basis of ker(W_T^* - I), n x geo
  bool excess_multiplicity = false;
  VariationalFlow flow;

  /// max over kernel vectors of |(W_T - I) v| / |W_T|
  [[nodiscard]] double kernel_residual() const;
};

/// Monodromy of the linearization along x(., z, 0) without family bookkeeping.
MonodromyRecord monodromy_at(const OdeSystem& sys, const Vec& z,
                             const LinearPeriodicConfig& cfg = {});

/// Throws DegenerateFamily if the multiplicity of +1 is below the family
/// dimension; flags excess_multiplicity when it is above.
MonodromyRecord monodromy(const OdeSystem& sys, const PeriodicFamily& family, const Vec& h,
                          const LinearPeriodicConfig& cfg = {});

/// T-periodic solutions u_1..u_k of u' = -Df(t, x(t, xi(h), 0))^* u as dense
/// paths. The paths come from integrating the adjoint system in the direction
/// in which its non-unit Floquet modes decay, so that rounding in u(0) along
/// those modes is not amplified.
class AdjointBasis {
 public:
  AdjointBasis() = default;
  AdjointBasis(Vec h, Mat initial, DenseSolution path, bool backward, double period,
               Trajectory base);

  [[nodiscard]] int k() const { return static_cast<int>(initial_.cols()); }
  [[nodiscard]] const Vec& h() const { return h_; }
  /// u_i(0) as columns, orthonormal.
  [[nodiscard]] const Mat& initial() const { return initial_; }
  [[nodiscard]] bool backward() const { return backward_; }
  [[nodiscard]] const Trajectory& base() const { return base_; }

  /// Columns u_1(t) .. u_k(t).
  [[nodiscard]] Mat at(double t) const;
  void eval(double t, Eigen::Ref<Vec> flat) const;  ///< column-major n*k
  [[nodiscard]] double periodicity_defect() const;

 private:
  Vec h_;
  Mat initial_;
  DenseSolution path_;  // n*k components, time reversed when backward_
  bool backward_ = false;
  double period_ = 0.0;
  Trajectory base_;
};

/// Orthogonal rotation of an orthonormal kernel basis per `o`.
Mat orient_adjoint_basis(const Mat& basis, const Mat& dxi, AdjointOrientation o);

AdjointBasis adjoint_periodic_basis(const OdeSystem& sys, const PeriodicFamily& family,
                                    const MonodromyRecord& record,
                                    const LinearPeriodicConfig& cfg = {});

AdjointBasis adjoint_periodic_basis(const OdeSystem& sys, const PeriodicFamily& family,
                                    const Vec& h, const LinearPeriodicConfig& cfg = {});

/// Frame data evaluated at one family point.
struct FrameSnapshot {
  Vec h;
  Vec z;
  MonodromyRecord record;
  AdjointBasis adjoint;
  Mat y0_inv;                 ///< Y^-1(0, z) = U(0)^*
  Mat yt_inv;                 ///< Y^-1(T, z)
  Mat y0_inv_minus_yt_inv;
  Mat delta;                  ///< lower-right (n-k) block of (Y^-1(0) - Y^-1(T)) S
  double top_right_norm = 0;  ///< of the upper-right k x (n-k) block, relative
  double det_delta = 1.0;
  double periodicity_defect = 0;
  bool valid = false;
};

/// Change of coordinates S shared by the whole family, built at a reference
/// parameter. The last n-k columns of S are unit vectors e_i picked by
/// column-pivoted QR on Y^-1(0,z) - Y^-1(T,z); the first k columns are
/// Dxi(h_ref), so S^-1 Dxi(h_ref) = (I; 0).
class ReductionFrame {
 public:
  ReductionFrame() = default;
  ReductionFrame(Mat s, Vec h_ref, std::vector<int> pivots, int k, LinearPeriodicConfig cfg);

  [[nodiscard]] const Mat& s() const { return s_; }
  [[nodiscard]] const Mat& s_inv() const { return s_inv_; }
  [[nodiscard]] const Vec& h_ref() const { return h_ref_; }
  [[nodiscard]] const std::vector<int>& pivots() const { return pivots_; }
  [[nodiscard]] int n() const { return static_cast<int>(s_.rows()); }
  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] const LinearPeriodicConfig& config() const { return cfg_; }

  /// pi S^-1 z and pi_perp S^-1 z.
  [[nodiscard]] Vec alpha_of(const Vec& z) const;
  [[nodiscard]] Vec beta_of(const Vec& z) const;
  /// S (alpha; beta)
  [[nodiscard]] Vec compose(const Vec& alpha, const Vec& beta) const;

  /// Top k x k block Psi of S^-1 Dxi(h) and the norm of the remaining rows.
  [[nodiscard]] Mat psi(const PeriodicFamily& family, const Vec& h) const;
  [[nodiscard]] double psi_complement_norm(const PeriodicFamily& family, const Vec& h) const;

  /// Frame data at h; `valid` reports whether the invariants hold there.
  [[nodiscard]] FrameSnapshot at(const OdeSystem& sys, const PeriodicFamily& family,
                                 const Vec& h) const;
  /// Same, reusing an already computed monodromy record and adjoint basis.
  [[nodiscard]] FrameSnapshot at(MonodromyRecord record, AdjointBasis adjoint) const;

 private:
  Mat s_;
  Mat s_inv_;
  Vec h_ref_;
  std::vector<int> pivots_;
  int k_ = 0;
  LinearPeriodicConfig cfg_;
};

/// Orthonormal completion of the adjoint basis: [u_1(0) .. u_k(0), C].
Mat adjoint_fundamental_initial(const Mat& basis);

/// Throws FrameConstructionFailure if no pivot choice gives |det Delta| > delta_tol.
ReductionFrame build_frame(const OdeSystem& sys, const PeriodicFamily& family, const Vec& h,
                           const LinearPeriodicConfig& cfg = {});

/// Largest |x(T, xi(h), 0) - xi(h)| and smallest singular value of Dxi(h) over
/// the provided samples.
struct FamilyCheck {
  double periodicity_defect = 0.0;
  double min_singular_value = 0.0;
};
FamilyCheck check_family(const OdeSystem& sys, const PeriodicFamily& family,
                         const std::vector<Vec>& samples, const IntegratorConfig& cfg = {});

}  // namespace malkin
