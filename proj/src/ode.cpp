#include "malkin/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "malkin/errors.hpp"
#include "malkin/sampling.hpp"

namespace malkin {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafety = 0.9;
constexpr double kFacMin = 0.2;   // largest shrink is 1/5
constexpr double kFacMax = 10.0;  // largest growth
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;

struct Stages {
  explicit Stages(Eigen::Index n)
      : k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n) {}
  Vec k1, k2, k3, k4, k5, k6, k7, tmp, y_new, err;
};

// One Dormand-Prince step from (t, y) with k1 = f(t, y) already in s.k1.
void dp_step(const Rhs& rhs, double t, const Vec& y, double h, Stages& s) {
  s.tmp = y + h * a21 * s.k1;
  rhs(t + c2 * h, s.tmp, s.k2);
  s.tmp = y + h * (a31 * s.k1 + a32 * s.k2);
  rhs(t + c3 * h, s.tmp, s.k3);
  s.tmp = y + h * (a41 * s.k1 + a42 * s.k2 + a43 * s.k3);
  rhs(t + c4 * h, s.tmp, s.k4);
  s.tmp = y + h * (a51 * s.k1 + a52 * s.k2 + a53 * s.k3 + a54 * s.k4);
  rhs(t + c5 * h, s.tmp, s.k5);
  s.tmp = y + h * (a61 * s.k1 + a62 * s.k2 + a63 * s.k3 + a64 * s.k4 + a65 * s.k5);
  rhs(t + h, s.tmp, s.k6);
  s.y_new = y + h * (a71 * s.k1 + a73 * s.k3 + a74 * s.k4 + a75 * s.k5 + a76 * s.k6);
  rhs(t + h, s.y_new, s.k7);
  s.err = h * (e1 * s.k1 + e3 * s.k3 + e4 * s.k4 + e5 * s.k5 + e6 * s.k6 + e7 * s.k7);
}

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const IntegratorConfig& cfg) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sk = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = err[i] / sk;
    acc += r * r;
  }
  const double e = std::sqrt(acc / static_cast<double>(err.size()));
  return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

double initial_step(const Rhs& rhs, double t0, const Vec& y0, const Vec& f0,
                    const IntegratorConfig& cfg, double span) {
  Vec sk = (cfg.abs_tol + cfg.rel_tol * y0.array().abs()).matrix();
  const double n = static_cast<double>(y0.size());
  const double d0 = std::sqrt((y0.array() / sk.array()).square().sum() / n);
  const double d1n = std::sqrt((f0.array() / sk.array()).square().sum() / n);
  double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
  h0 = std::min({h0, cfg.max_step, span});
  Vec y1 = y0 + h0 * f0;
  Vec f1(y0.size());
  rhs(t0 + h0, y1, f1);
  const double d2 = std::sqrt(((f1 - f0).array() / sk.array()).square().sum() / n) / h0;
  const double dm = std::max(d1n, d2);
  const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  return std::min({100.0 * h0, h1, cfg.max_step, span});
}

}  // namespace

/// Accumulates accepted steps, then packs them into a DenseSolution.
class DenseBuilder {
 public:
  DenseBuilder(double t0, const Vec& y0) : dim_(static_cast<int>(y0.size())) {
    grid_.push_back(t0);
    append(nodes_, y0);
  }

  void add(double t1, const Vec& y1, const Vec& r2, const Vec& r3, const Vec& r4,
           const Vec& r5) {
    grid_.push_back(t1);
    append(nodes_, y1);
    append(coeffs_, r2);
    append(coeffs_, r3);
    append(coeffs_, r4);
    append(coeffs_, r5);
  }

  DenseSolution finish() && {
    DenseSolution out;
    out.dim_ = dim_;
    const auto steps = static_cast<Eigen::Index>(grid_.size() - 1);
    out.nodes_ = Eigen::Map<const Mat>(nodes_.data(), dim_, steps + 1);
    out.coeffs_ = Eigen::Map<const Mat>(coeffs_.data(), dim_, 4 * steps);
    out.grid_ = std::move(grid_);
    return out;
  }

 private:
  static void append(std::vector<double>& buf, const Vec& v) {
    buf.insert(buf.end(), v.data(), v.data() + v.size());
  }

  int dim_;
  std::vector<double> grid_;
  std::vector<double> nodes_;
  std::vector<double> coeffs_;
};

namespace {

void add_dense_step(DenseBuilder& b, double h, double t1, const Vec& y0, const Stages& s) {
  Vec r2 = s.y_new - y0;
  Vec r3 = h * s.k1 - r2;
  Vec r4 = r2 - h * s.k7 - r3;
  Vec r5 = h * (d1 * s.k1 + d3 * s.k3 + d4 * s.k4 + d5 * s.k5 + d6 * s.k6 + d7 * s.k7);
  b.add(t1, s.y_new, r2, r3, r4, r5);
}

}  // namespace

void OdeSystem::full_field(double t, const ConstRefVec& x, double eps, RefVec out) const {
  f(t, x, out);
  if (eps != 0.0) {
    Vec gv(n);
    g(t, x, eps, gv);
    out += eps * gv;
  }
}

void IntegratorConfig::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
    throw std::invalid_argument("integrator tolerances must be positive");
  if (!(min_step > 0.0) || min_step > max_step)
    throw std::invalid_argument("integrator requires 0 < min_step <= max_step");
  if (max_steps <= 0) throw std::invalid_argument("integrator max_steps must be positive");
}

IntegratorConfig IntegratorConfig::tightened(double factor) const {
  IntegratorConfig c = *this;
  c.abs_tol *= factor;
  c.rel_tol *= factor;
  return c;
}

std::size_t DenseSolution::locate(double t) const {
  // Index i of the step [grid_[i], grid_[i+1]] containing t.
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  if (it == grid_.begin()) return 0;
  const auto i = static_cast<std::size_t>(it - grid_.begin()) - 1;
  return std::min(i, steps() - 1);
}

void DenseSolution::eval_block(double t, Eigen::Index offset, RefVec out) const {
  const Eigen::Index m = out.size();
  if (steps() == 0) {
    out = nodes_.col(0).segment(offset, m);
    return;
  }
  const std::size_t i = locate(t);
  const auto ci = static_cast<Eigen::Index>(i);
  if (t == grid_[i]) {
    out = nodes_.col(ci).segment(offset, m);
    return;
  }
  if (t == grid_[i + 1]) {
    out = nodes_.col(ci + 1).segment(offset, m);
    return;
  }
  const double h = grid_[i + 1] - grid_[i];
  const double th = (t - grid_[i]) / h;
  const double th1 = 1.0 - th;
  const auto r1 = nodes_.col(ci).segment(offset, m);
  const auto r2 = coeffs_.col(4 * ci).segment(offset, m);
  const auto r3 = coeffs_.col(4 * ci + 1).segment(offset, m);
  const auto r4 = coeffs_.col(4 * ci + 2).segment(offset, m);
  const auto r5 = coeffs_.col(4 * ci + 3).segment(offset, m);
  out = r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
}

void DenseSolution::eval(double t, RefVec out) const { eval_block(t, 0, out); }

Vec DenseSolution::operator()(double t) const {
  Vec out(dim_);
  eval(t, out);
  return out;
}

Vec DenseSolution::derivative(double t) const {
  const std::size_t i = locate(t);
  const auto ci = static_cast<Eigen::Index>(i);
  const double h = grid_[i + 1] - grid_[i];
  const double th = (t - grid_[i]) / h;
  const double th1 = 1.0 - th;
  // d/dth of r1 + th r2 + th th1 r3 + th^2 th1 r4 + th^2 th1^2 r5
  const double c3d = 1.0 - 2.0 * th;
  const double c4d = 2.0 * th - 3.0 * th * th;
  const double c5d = 2.0 * th * th1 * th1 - 2.0 * th * th * th1;
  return (coeffs_.col(4 * ci) + c3d * coeffs_.col(4 * ci + 1) + c4d * coeffs_.col(4 * ci + 2) +
          c5d * coeffs_.col(4 * ci + 3)) /
         h;
}

DenseSolution DenseSolution::slice(Eigen::Index offset, Eigen::Index count) const {
  DenseSolution out;
  out.dim_ = static_cast<int>(count);
  out.grid_ = grid_;
  out.nodes_ = nodes_.middleRows(offset, count);
  out.coeffs_ = coeffs_.middleRows(offset, count);
  return out;
}

DenseSolution integrate_rhs(const Rhs& rhs, double t0, const Vec& y0, double t_end,
                            const IntegratorConfig& cfg) {
  cfg.validate();
  if (!(t_end > t0)) throw std::invalid_argument("integrate_rhs requires t_end > t0");
  if (!y0.allFinite()) throw std::invalid_argument("initial state must be finite");

  const Eigen::Index n = y0.size();
  Stages s(n);
  DenseBuilder builder(t0, y0);

  Vec y = y0;
  double t = t0;
  rhs(t, y, s.k1);
  double h = initial_step(rhs, t0, y0, s.k1, cfg, t_end - t0);
  double fac_old = 1e-4;
  bool last_rejected = false;
  std::int64_t nsteps = 0;

  while (t < t_end) {
    if (++nsteps > cfg.max_steps)
      throw StepFailure("max_steps exceeded at t=" + std::to_string(t));
    bool final_step = false;
    if (t + 1.01 * h >= t_end) {
      h = t_end - t;
      final_step = true;
    }
    dp_step(rhs, t, y, h, s);
    const double err = error_norm(s.err, y, s.y_new, cfg);

    const double fac11 = std::pow(err, kExpo);
    double fac = fac11 / std::pow(fac_old, kBeta);
    fac = std::clamp(fac / kSafety, 1.0 / kFacMax, 1.0 / kFacMin);
    double h_new = h / fac;

    if (err <= 1.0) {
      fac_old = std::max(err, 1e-4);
      const double t_new = final_step ? t_end : t + h;
      add_dense_step(builder, h, t_new, y, s);
      y = s.y_new;
      t = t_new;
      if (y.lpNorm<Eigen::Infinity>() > cfg.blowup_bound)
        throw Blowup("state norm exceeded " + std::to_string(cfg.blowup_bound) + " at t=" +
                     std::to_string(t));
      s.k1 = s.k7;
      if (last_rejected) h_new = std::min(h_new, h);
      last_rejected = false;
      h = std::min(h_new, cfg.max_step);
    } else {
      if (std::isfinite(err))
        h_new = h / std::min(1.0 / kFacMin, fac11 / kSafety);
      else
        h_new = h * kFacMin;
      last_rejected = true;
      h = h_new;
      if (h < cfg.min_step)
        throw StepFailure("step size " + std::to_string(h) + " below min_step at t=" +
                          std::to_string(t));
    }
  }
  return std::move(builder).finish();
}

DenseSolution replay_on_grid(const Rhs& rhs, const Vec& y0, std::span<const double> grid) {
  if (grid.size() < 2) throw std::invalid_argument("replay grid needs at least two nodes");
  Stages s(y0.size());
  DenseBuilder builder(grid[0], y0);
  Vec y = y0;
  rhs(grid[0], y, s.k1);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double h = grid[i + 1] - grid[i];
    dp_step(rhs, grid[i], y, h, s);
    add_dense_step(builder, h, grid[i + 1], y, s);
    y = s.y_new;
    s.k1 = s.k7;
  }
  return std::move(builder).finish();
}

Trajectory integrate(const OdeSystem& sys, const Vec& z, double eps, double t_end,
                     const IntegratorConfig& cfg) {
  if (z.size() != sys.n) throw std::invalid_argument("state dimension mismatch");
  if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("eps must lie in [0,1]");
  Vec gbuf(sys.n);
  Rhs rhs = [&sys, eps, &gbuf](double t, const Vec& x, Vec& dx) {
    sys.f(t, x, dx);
    if (eps != 0.0) {
      sys.g(t, x, eps, gbuf);
      dx += eps * gbuf;
    }
  };
  return Trajectory{z, eps, integrate_rhs(rhs, 0.0, z, t_end, cfg)};
}

Mat VariationalFlow::w(double t) const {
  const int n = trajectory.path.dim();
  Vec flat = w_path(t);
  return Eigen::Map<const Mat>(flat.data(), n, n);
}

Mat VariationalFlow::w_end() const {
  const int n = trajectory.path.dim();
  Vec flat = w_path.back();
  return Eigen::Map<const Mat>(flat.data(), n, n);
}

VariationalFlow variational_flow(const OdeSystem& sys, const Vec& z, double t_end,
                                 const IntegratorConfig& cfg) {
  const int n = sys.n;
  if (z.size() != n) throw std::invalid_argument("state dimension mismatch");
  Mat a(n, n);
  Rhs rhs = [&sys, n, &a](double t, const Vec& y, Vec& dy) {
    const auto x = y.head(n);
    sys.f(t, x, dy.head(n));
    sys.df(t, x, a);
    Eigen::Map<const Mat> w(y.data() + n, n, n);
    Eigen::Map<Mat> dw(dy.data() + n, n, n);
    dw.noalias() = a * w;
  };
  Vec y0(n + n * n);
  y0.head(n) = z;
  Eigen::Map<Mat>(y0.data() + n, n, n).setIdentity();
  DenseSolution full = integrate_rhs(rhs, 0.0, y0, t_end, cfg);
  VariationalFlow out;
  out.trajectory = Trajectory{z, 0.0, full.slice(0, n)};
  out.w_path = full.slice(n, n * n);
  return out;
}

DifferenceQuotient::DifferenceQuotient(double eps, Trajectory perturbed, Trajectory base)
    : eps_(eps), base_(std::move(base)), perturbed_(std::move(perturbed)) {}

DifferenceQuotient::DifferenceQuotient(DenseSolution limit, Trajectory base)
    : eps_(0.0), base_(std::move(base)), limit_(std::move(limit)) {}

Vec DifferenceQuotient::operator()(double t) const {
  if (is_limit()) return limit_(t);
  return (perturbed_(t) - base_(t)) / eps_;
}

Vec DifferenceQuotient::end() const {
  if (is_limit()) return limit_.back();
  return (perturbed_.end() - base_.end()) / eps_;
}

std::vector<double> DifferenceQuotient::grid() const {
  const auto& a = base_.grid();
  const auto& b = is_limit() ? limit_.grid() : perturbed_.grid();
  std::vector<double> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

DifferenceQuotient difference_quotient_flow(const OdeSystem& sys, const Vec& z, double eps,
                                            const IntegratorConfig& cfg) {
  const double period = sys.period;
  if (eps > 0.0) {
    Trajectory base = integrate(sys, z, 0.0, period, cfg);
    Trajectory pert = integrate(sys, z, eps, period, cfg);
    return DifferenceQuotient(eps, std::move(pert), std::move(base));
  }
  if (eps < 0.0) throw std::invalid_argument("eps must lie in [0,1]");
  const int n = sys.n;
  Mat a(n, n);
  Vec gv(n);
  Rhs rhs = [&sys, n, &a, &gv](double t, const Vec& s, Vec& ds) {
    const auto x = s.head(n);
    sys.f(t, x, ds.head(n));
    sys.df(t, x, a);
    sys.g(t, x, 0.0, gv);
    ds.tail(n).noalias() = a * s.tail(n);
    ds.tail(n) += gv;
  };
  Vec s0 = Vec::Zero(2 * n);
  s0.head(n) = z;
  DenseSolution full = integrate_rhs(rhs, 0.0, s0, period, cfg);
  Trajectory base{z, 0.0, full.slice(0, n)};
  return DifferenceQuotient(full.slice(n, n), std::move(base));
}

double periodicity_defect(const OdeSystem& sys, std::span<const Vec> states,
                          std::span<const double> times, std::span<const double> eps_values) {
  double worst = 0.0;
  Vec a(sys.n), b(sys.n);
  for (const Vec& x : states) {
    for (double t : times) {
      sys.f(t, x, a);
      sys.f(t + sys.period, x, b);
      worst = std::max(worst, (a - b).lpNorm<Eigen::Infinity>());
      for (double e : eps_values) {
        sys.g(t, x, e, a);
        sys.g(t + sys.period, x, e, b);
        worst = std::max(worst, (a - b).lpNorm<Eigen::Infinity>());
      }
    }
  }
  return worst;
}

double jacobian_defect(const OdeSystem& sys, std::span<const Vec> states,
                       std::span<const double> times, double step) {
  const int n = sys.n;
  double worst = 0.0;
  Mat analytic(n, n);
  Vec fp(n), fm(n);
  for (const Vec& x : states) {
    for (double t : times) {
      sys.df(t, x, analytic);
      for (int j = 0; j < n; ++j) {
        Vec xp = x, xm = x;
        xp[j] += step;
        xm[j] -= step;
        sys.f(t, xp, fp);
        sys.f(t, xm, fm);
        const Vec col = (fp - fm) / (2.0 * step);
        worst = std::max(worst, (col - analytic.col(j)).lpNorm<Eigen::Infinity>());
      }
    }
  }
  return worst;
}

double quotient_increment_constant(const OdeSystem& sys, const Vec& z0, double delta,
                                   int samples, std::uint64_t seed,
                                   const IntegratorConfig& cfg) {
  Sampler rng(seed);
  const Vec origin = Vec::Zero(sys.n);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec z1 = rng.in_ball(z0, delta);
    const Vec z2 = rng.in_ball(z0, delta);
    const Vec d = rng.in_ball(origin, delta);
    const double eps = rng.uniform(0.0, delta);
    const double dist = (z1 - z2).norm();
    if (dist == 0.0) continue;
    auto y_end = [&](const Vec& z, double e) { return difference_quotient_flow(sys, z, e, cfg).end(); };
    const Vec num = y_end(z1 + d, eps) - y_end(z1, 0.0) - y_end(z2 + d, eps) + y_end(z2, 0.0);
    worst = std::max(worst, num.norm() / dist);
  }
  return worst;
}

}  // namespace malkin
