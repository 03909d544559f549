#include "malkin/linear_periodic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "malkin/errors.hpp"

namespace malkin {

double MonodromyRecord::kernel_residual() const {
  if (kernel_basis.cols() == 0) return 0.0;
  const Mat a = w_t - Mat::Identity(w_t.rows(), w_t.cols());
  const double scale = Eigen::JacobiSVD<Mat>(w_t).singularValues()(0);
  return (a * kernel_basis).colwise().norm().maxCoeff() / scale;
}

MonodromyRecord monodromy_at(const OdeSystem& sys, const Vec& z,
                             const LinearPeriodicConfig& cfg) {
  MonodromyRecord rec;
  rec.z = z;
  rec.flow = variational_flow(sys, z, sys.period, cfg.integrator);
  rec.w_t = rec.flow.w_end();
  const int n = sys.n;
  rec.multipliers = Eigen::EigenSolver<Mat>(rec.w_t, false).eigenvalues();

  const Mat a = rec.w_t - Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  rec.singular_values = svd.singularValues();
  const double scale = Eigen::JacobiSVD<Mat>(rec.w_t).singularValues()(0);
  const double threshold = cfg.kernel_tol * scale;
  rec.geo_mult_one = static_cast<int>(
      (rec.singular_values.array() < threshold).count());
  // The same spectrum gives both kernels, so their dimensions agree exactly.
  rec.kernel_basis = svd.matrixV().rightCols(rec.geo_mult_one);
  rec.adjoint_kernel_basis = svd.matrixU().rightCols(rec.geo_mult_one);
  return rec;
}

MonodromyRecord monodromy(const OdeSystem& sys, const PeriodicFamily& family, const Vec& h,
                          const LinearPeriodicConfig& cfg) {
  MonodromyRecord rec = monodromy_at(sys, family.xi(h), cfg);
  rec.h = h;
  if (rec.geo_mult_one < family.k)
    throw DegenerateFamily("multiplier +1 has geometric multiplicity " +
                           std::to_string(rec.geo_mult_one) + " < family dimension " +
                           std::to_string(family.k));
  rec.excess_multiplicity = rec.geo_mult_one > family.k;
  return rec;
}

AdjointBasis::AdjointBasis(Vec h, Mat initial, DenseSolution path, bool backward,
                           double period, Trajectory base)
    : h_(std::move(h)),
      initial_(std::move(initial)),
      path_(std::move(path)),
      backward_(backward),
      period_(period),
      base_(std::move(base)) {}

void AdjointBasis::eval(double t, Eigen::Ref<Vec> flat) const {
  path_.eval(backward_ ? period_ - t : t, flat);
}

Mat AdjointBasis::at(double t) const {
  const auto n = initial_.rows();
  Vec flat(n * initial_.cols());
  eval(t, flat);
  return Eigen::Map<const Mat>(flat.data(), n, initial_.cols());
}

double AdjointBasis::periodicity_defect() const {
  return (at(period_) - at(0.0)).colwise().norm().maxCoeff();
}

Mat orient_adjoint_basis(const Mat& basis, const Mat& dxi, AdjointOrientation o) {
  if (o == AdjointOrientation::kRaw) return basis;
  const Mat target = o == AdjointOrientation::kAlongTangent ? dxi : Mat(-dxi);
  Eigen::JacobiSVD<Mat> svd(basis.transpose() * target,
                            Eigen::ComputeFullU | Eigen::ComputeFullV);
  return basis * (svd.matrixU() * svd.matrixV().transpose());
}

AdjointBasis adjoint_periodic_basis(const OdeSystem& sys, const PeriodicFamily& family,
                                    const MonodromyRecord& record,
                                    const LinearPeriodicConfig& cfg) {
  const int n = sys.n;
  const int k = family.k;
  if (record.geo_mult_one != k)
    throw DegenerateFamily("adjoint basis needs geometric multiplicity " + std::to_string(k) +
                           ", found " + std::to_string(record.geo_mult_one));
  const Mat b = orient_adjoint_basis(record.adjoint_kernel_basis, family.dxi(record.h), cfg.orientation);

  // Error in u(0) along a Floquet mode with multiplier mu grows by 1/|mu|
  // forward in time and by |mu| backward.
  double forward_gain = 1.0, backward_gain = 1.0;
  for (Eigen::Index i = 0; i < record.multipliers.size(); ++i) {
    const double m = std::abs(record.multipliers[i]);
    backward_gain = std::max(backward_gain, m);
    forward_gain = std::max(forward_gain, m > 0.0 ? 1.0 / m : 1e300);
  }
  const bool backward = backward_gain < forward_gain;

  const double period = sys.period;
  const DenseSolution& xpath = record.flow.trajectory.path;
  Mat a(n, n);
  Vec x(n);
  Rhs rhs = [&, backward](double s, const Vec& v, Vec& dv) {
    const double t = backward ? period - s : s;
    xpath.eval(t, x);
    sys.df(t, x, a);
    Eigen::Map<const Mat> vm(v.data(), n, k);
    Eigen::Map<Mat> dvm(dv.data(), n, k);
    dvm.noalias() = a.transpose() * vm;
    if (!backward) dvm = -dvm;
  };
  Vec v0 = Eigen::Map<const Vec>(b.data(), n * k);
  DenseSolution path = integrate_rhs(rhs, 0.0, v0, period, cfg.integrator);
  AdjointBasis basis(record.h, b, std::move(path), backward, period, record.flow.trajectory);
  if (basis.periodicity_defect() > cfg.periodicity_tol)
    throw DegenerateFamily("adjoint solutions are not periodic: defect " +
                           std::to_string(basis.periodicity_defect()));
  return basis;
}

AdjointBasis adjoint_periodic_basis(const OdeSystem& sys, const PeriodicFamily& family,
                                    const Vec& h, const LinearPeriodicConfig& cfg) {
  return adjoint_periodic_basis(sys, family, monodromy(sys, family, h, cfg), cfg);
}

Mat adjoint_fundamental_initial(const Mat& basis) {
  const auto n = basis.rows();
  const auto k = basis.cols();
  Mat u0(n, n);
  u0.leftCols(k) = basis;
  if (k < n) {
    Eigen::HouseholderQR<Mat> qr(basis);
    const Mat q = qr.householderQ();
    u0.rightCols(n - k) = q.rightCols(n - k);
  }
  return u0;
}

ReductionFrame::ReductionFrame(Mat s, Vec h_ref, std::vector<int> pivots, int k,
                               LinearPeriodicConfig cfg)
    : s_(std::move(s)),
      s_inv_(s_.inverse()),
      h_ref_(std::move(h_ref)),
      pivots_(std::move(pivots)),
      k_(k),
      cfg_(cfg) {}

Vec ReductionFrame::alpha_of(const Vec& z) const { return (s_inv_ * z).head(k_); }
Vec ReductionFrame::beta_of(const Vec& z) const { return (s_inv_ * z).tail(n() - k_); }

Vec ReductionFrame::compose(const Vec& alpha, const Vec& beta) const {
  Vec ab(n());
  ab.head(k_) = alpha;
  ab.tail(n() - k_) = beta;
  return s_ * ab;
}

Mat ReductionFrame::psi(const PeriodicFamily& family, const Vec& h) const {
  return (s_inv_ * family.dxi(h)).topRows(k_);
}

double ReductionFrame::psi_complement_norm(const PeriodicFamily& family, const Vec& h) const {
  if (k_ == n()) return 0.0;
  return (s_inv_ * family.dxi(h)).bottomRows(n() - k_).norm();
}

FrameSnapshot ReductionFrame::at(MonodromyRecord record, AdjointBasis adjoint) const {
  const int n = this->n();
  const int k = k_;
  FrameSnapshot snap;
  snap.h = record.h;
  snap.z = record.z;
  const Mat u0 = adjoint_fundamental_initial(adjoint.initial());
  const Mat c = u0.rightCols(n - k);
  // Columns of the adjoint fundamental matrix beyond the periodic ones evolve
  // as U(T) = W_T^-* U(0).
  const Mat ct = record.w_t.transpose().partialPivLu().solve(c);
  snap.y0_inv.resize(n, n);
  snap.yt_inv.resize(n, n);
  snap.y0_inv.topRows(k) = adjoint.at(0.0).transpose();
  snap.yt_inv.topRows(k) = adjoint.at(record.flow.trajectory.path.t_end()).transpose();
  snap.y0_inv.bottomRows(n - k) = c.transpose();
  snap.yt_inv.bottomRows(n - k) = ct.transpose();
  snap.y0_inv_minus_yt_inv = snap.y0_inv - snap.yt_inv;
  const Mat ds = snap.y0_inv_minus_yt_inv * s_;
  const double scale = std::max(1.0, snap.y0_inv_minus_yt_inv.norm());
  snap.top_right_norm = k < n ? ds.topRightCorner(k, n - k).norm() / scale : 0.0;
  snap.delta = ds.bottomRightCorner(n - k, n - k);
  snap.det_delta = k < n ? snap.delta.determinant() : 1.0;
  snap.periodicity_defect = adjoint.periodicity_defect();
  snap.valid = snap.top_right_norm <= cfg_.block_tol && std::abs(snap.det_delta) > cfg_.delta_tol &&
               snap.periodicity_defect <= cfg_.periodicity_tol;
  snap.record = std::move(record);
  snap.adjoint = std::move(adjoint);
  return snap;
}

FrameSnapshot ReductionFrame::at(const OdeSystem& sys, const PeriodicFamily& family,
                                 const Vec& h) const {
  MonodromyRecord rec = monodromy(sys, family, h, cfg_);
  AdjointBasis adj = adjoint_periodic_basis(sys, family, rec, cfg_);
  return at(std::move(rec), std::move(adj));
}

ReductionFrame build_frame(const OdeSystem& sys, const PeriodicFamily& family, const Vec& h,
                           const LinearPeriodicConfig& cfg) {
  const int n = sys.n;
  const int k = family.k;
  const Mat dxi = family.dxi(h);
  if (k == n) {
    // Every direction is periodic; Delta is 0x0.
    if (Eigen::FullPivLU<Mat>(dxi).rank() < n)
      throw FrameConstructionFailure("Dxi(h) is singular for k = n");
    return ReductionFrame(dxi, h, {}, k, cfg);
  }
  // A provisional identity frame gives Y^-1(0) - Y^-1(T) at h.
  ReductionFrame probe(Mat::Identity(n, n), h, {}, k, cfg);
  const FrameSnapshot snap = probe.at(sys, family, h);
  const Mat lower = snap.y0_inv_minus_yt_inv.bottomRows(n - k);
  Eigen::ColPivHouseholderQR<Mat> qr(lower);
  std::vector<int> pivots;
  for (int j = 0; j < n - k; ++j) pivots.push_back(qr.colsPermutation().indices()[j]);

  Mat s = Mat::Zero(n, n);
  s.leftCols(k) = dxi;
  for (int j = 0; j < n - k; ++j) s(pivots[j], k + j) = 1.0;
  if (Eigen::FullPivLU<Mat>(s).rank() < n)
    throw FrameConstructionFailure("pivot columns do not complement Dxi(h)");

  ReductionFrame frame(s, h, pivots, k, cfg);
  const Mat ds = snap.y0_inv_minus_yt_inv * s;
  const double det = ds.bottomRightCorner(n - k, n - k).determinant();
  if (!(std::abs(det) > cfg.delta_tol))
    throw FrameConstructionFailure("no column selection gives |det Delta| > delta_tol (" +
                                   std::to_string(det) + ")");
  return frame;
}

FamilyCheck check_family(const OdeSystem& sys, const PeriodicFamily& family,
                         const std::vector<Vec>& samples, const IntegratorConfig& cfg) {
  FamilyCheck out;
  out.min_singular_value = 1e300;
  for (const Vec& h : samples) {
    const Vec z = family.xi(h);
    const Trajectory tr = integrate(sys, z, 0.0, sys.period, cfg);
    out.periodicity_defect = std::max(out.periodicity_defect, (tr.end() - z).norm());
    const Vec sv = Eigen::JacobiSVD<Mat>(family.dxi(h)).singularValues();
    out.min_singular_value = std::min(out.min_singular_value, sv(sv.size() - 1));
  }
  return out;
}

}  // namespace malkin
