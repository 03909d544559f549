#include "malkin/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <string>

#include "malkin/errors.hpp"
#include "malkin/parallel.hpp"
#include "malkin/sampling.hpp"

namespace malkin {

bool Box::contains(const Vec& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

Box Box::around(const Vec& c, double radius) {
  return Box{c.array() - radius, c.array() + radius};
}

MalkinValue eval_malkin_detail(const OdeSystem& sys, const PeriodicFamily& family,
                               const ReductionFrame& frame, const Vec& h,
                               const QuadratureConfig& quad) {
  const FrameSnapshot snap = frame.at(sys, family, h);
  const DenseSolution& path = snap.record.flow.trajectory.path;
  const AdjointBasis& adj = snap.adjoint;
  const int n = sys.n, k = family.k;
  Vec x(n), g(n), u(n * k);
  const VecIntegrand integrand = [&](double t, Eigen::Ref<Vec> out) {
    path.eval(t, x);
    sys.g(t, x, 0.0, g);
    adj.eval(t, u);
    out = Eigen::Map<const Mat>(u.data(), n, k).transpose() * g;
  };
  const QuadratureResult r = integrate_adaptive(integrand, k, 0.0, sys.period, quad);
  MalkinValue out;
  out.value = r.value;
  out.quad_error = r.error_estimate;
  out.evaluations = r.evaluations;
  out.frame_valid = snap.valid;
  return out;
}

Vec eval_malkin(const OdeSystem& sys, const PeriodicFamily& family, const ReductionFrame& frame,
                const Vec& h, const QuadratureConfig& quad) {
  return eval_malkin_detail(sys, family, frame, h, quad).value;
}

Reparametrization::Reparametrization(PeriodicFamily family, ReductionFrame frame, Vec h_star,
                                     double v_radius)
    : family_(std::move(family)),
      frame_(std::move(frame)),
      h_star_(std::move(h_star)),
      v_radius_(v_radius) {
  alpha_star_ = alpha_of_h(h_star_);
  psi_star_ = frame_.psi(family_, h_star_);
}

Vec Reparametrization::alpha_of_h(const Vec& h) const { return frame_.alpha_of(family_.xi(h)); }

Vec Reparametrization::h_tilde(const Vec& alpha) const {
  Vec h = h_star_ + psi_star_.partialPivLu().solve(alpha - alpha_star_);
  double rn = 0.0;
  for (int it = 0; it < 50; ++it) {
    const Vec r = alpha_of_h(h) - alpha;
    rn = r.norm();
    if (rn <= 1e-14 * std::max(1.0, alpha.norm())) return h;
    const Vec step = frame_.psi(family_, h).partialPivLu().solve(r);
    h -= step;
    if (step.norm() <= 1e-15 * std::max(1.0, h.norm())) break;
  }
  rn = (alpha_of_h(h) - alpha).norm();
  if (!(rn <= 1e-12)) throw NoConvergence("h~(alpha) Newton solve failed: residual " + std::to_string(rn));
  return h;
}

Vec Reparametrization::beta0(const Vec& alpha) const {
  return frame_.beta_of(family_.xi(h_tilde(alpha)));
}

Reparametrization reparametrize(const PeriodicFamily& family, const ReductionFrame& frame,
                                const Vec& h_star, double max_radius) {
  const Mat psi = frame.psi(family, h_star);
  const double det = psi.determinant();
  if (!(std::abs(det) > frame.config().delta_tol))
    throw PsiSingular("det Psi(h*) = " + std::to_string(det));
  const int k = family.k;
  double radius = max_radius;
  for (int attempt = 0; attempt < 12; ++attempt, radius *= 0.5) {
    Reparametrization rp(family, frame, h_star, radius);
    std::vector<Vec> alphas;
    for (int i = 0; i < 24; ++i) {
      Vec d = 2.0 * halton(static_cast<std::uint64_t>(i), k).array() - 1.0;
      if (d.norm() > 1.0) d /= d.norm();
      alphas.push_back(rp.alpha_star() + radius * d);
    }
    for (int i = 0; i < 2 * k; ++i) {
      Vec d = Vec::Zero(k);
      d[i / 2] = i % 2 == 0 ? radius : -radius;
      alphas.push_back(rp.alpha_star() + d);
    }
    bool ok = true;
    std::vector<Vec> hs;
    for (const Vec& a : alphas) {
      try {
        const Vec h = rp.h_tilde(a);
        // A sign change of det Psi along the way would mean h~ folds over.
        if (frame.psi(family, h).determinant() * det <= 0.0) ok = false;
        hs.push_back(h);
      } catch (const NoConvergence&) {
        ok = false;
      }
      if (!ok) break;
    }
    for (std::size_t i = 0; ok && i < hs.size(); ++i)
      for (std::size_t j = i + 1; ok && j < hs.size(); ++j)
        if ((alphas[i] - alphas[j]).norm() > 1e-9 && (hs[i] - hs[j]).norm() < 1e-12) ok = false;
    if (ok) return rp;
  }
  throw NoConvergence("no radius for V keeps the h~ Newton solve convergent");
}

Vec eval_g(const OdeSystem& sys, const Reparametrization& reparam, const Vec& alpha,
           const LinearPeriodicConfig& cfg) {
  const ReductionFrame& frame = reparam.frame();
  const Vec h = reparam.h_tilde(alpha);
  const Vec z = frame.compose(alpha, frame.beta_of(reparam.family().xi(h)));
  const MonodromyRecord rec = monodromy_at(sys, z, cfg);
  const int k = reparam.family().k;
  if (rec.geo_mult_one != k)
    throw DegenerateFamily("multiplier +1 has geometric multiplicity " +
                           std::to_string(rec.geo_mult_one) + " at S(alpha; beta0(alpha))");
  const Mat b = orient_adjoint_basis(rec.adjoint_kernel_basis, reparam.family().dxi(h),
                                     cfg.orientation);
  const DifferenceQuotient y = difference_quotient_flow(sys, z, 0.0, cfg.integrator);
  return b.transpose() * y.end();
}

LsProblem periodic_ls_problem(const OdeSystem& sys, const Reparametrization& reparam) {
  const ReductionFrame& frame = reparam.frame();
  const LinearPeriodicConfig cfg = frame.config();
  LsProblem prob;
  prob.n = frame.n();
  prob.k = frame.k();
  prob.s = frame.s();
  prob.finalize();
  prob.v_center = reparam.alpha_star();
  prob.v_radius = reparam.v_radius();
  prob.beta0 = [reparam](const Vec& a) { return reparam.beta0(a); };

  // Y^-1 at the family point over pi S^-1 z; consecutive calls within one
  // branch solve share alpha, so the last snapshot is kept.
  struct Cache {
    std::mutex m;
    bool has = false;
    Vec alpha;
    Mat yt_inv;
    Mat dp;
  };
  auto cache = std::make_shared<Cache>();
  auto lookup = [sys, reparam, cache](const Vec& z) -> std::pair<Mat, Mat> {
    const ReductionFrame& fr = reparam.frame();
    const Vec a = fr.alpha_of(z);
    {
      std::lock_guard lock(cache->m);
      if (cache->has && (a - cache->alpha).norm() <= 1e-12 * std::max(1.0, a.norm()))
        return {cache->yt_inv, cache->dp};
    }
    const FrameSnapshot snap = fr.at(sys, reparam.family(), reparam.h_tilde(a));
    std::lock_guard lock(cache->m);
    cache->has = true;
    cache->alpha = a;
    cache->yt_inv = snap.yt_inv;
    cache->dp = snap.y0_inv_minus_yt_inv;
    return {cache->yt_inv, cache->dp};
  };
  prob.p = [sys, cfg, lookup](const Vec& z) -> Vec {
    const Trajectory tr = integrate(sys, z, 0.0, sys.period, cfg.integrator);
    return lookup(z).first * (tr.end() - z);
  };
  prob.dp = [lookup](const Vec& z) -> Mat { return lookup(z).second; };
  prob.q = [sys, cfg, lookup](const Vec& z, double eps) -> Vec {
    const DifferenceQuotient y = difference_quotient_flow(sys, z, eps, cfg.integrator);
    return lookup(z).first * y.end();
  };
  if (prob.k < prob.n) {
    const FrameSnapshot snap = frame.at(sys, reparam.family(), reparam.h_star());
    prob.residual_scale = std::max(1.0, (snap.y0_inv_minus_yt_inv * prob.s)
                                            .bottomRightCorner(prob.n - prob.k, prob.n - prob.k)
                                            .norm());
  }
  return prob;
}

BifFunction malkin_function(const OdeSystem& sys, const PeriodicFamily& family,
                            const ReductionFrame& frame, std::vector<bool> angular,
                            const BifConfig& cfg) {
  BifFunction bf;
  bf.kind = BifKind::kMalkin;
  bf.k = family.k;
  bf.angular = std::move(angular);
  const QuadratureConfig quad = cfg.quad;
  bf.eval = [sys, family, frame, quad](const Vec& h) {
    return eval_malkin(sys, family, frame, h, quad);
  };
  return bf;
}

BifFunction g_function(const OdeSystem& sys, const Reparametrization& reparam,
                       const LinearPeriodicConfig& cfg) {
  BifFunction bf;
  bf.kind = BifKind::kReduced;
  bf.k = reparam.family().k;
  bf.angular.assign(static_cast<std::size_t>(bf.k), false);
  bf.eval = [sys, reparam, cfg](const Vec& a) { return eval_g(sys, reparam, a, cfg); };
  return bf;
}

Mat central_jacobian(const BifFunction& bf, const Vec& h, double step) {
  Mat jac(bf.k, h.size());
  Vec hp = h, hm = h;
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    hp[j] = h[j] + step;
    hm[j] = h[j] - step;
    jac.col(j) = (bf(hp) - bf(hm)) / (2.0 * step);
    hp[j] = hm[j] = h[j];
  }
  return jac;
}

namespace {

bool full_period(const BifFunction& bf, const Box& region, int i) {
  return static_cast<std::size_t>(i) < bf.angular.size() && bf.angular[i] &&
         std::abs(region.hi[i] - region.lo[i] - kTwoPi) <= 1e-12;
}

// Signed difference a - b, reduced to (-pi, pi] on angular coordinates.
Vec periodic_diff(const BifFunction& bf, const Vec& a, const Vec& b) {
  Vec d = a - b;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (static_cast<std::size_t>(i) < bf.angular.size() && bf.angular[i])
      d[i] = std::remainder(d[i], kTwoPi);
  return d;
}

// Angular coordinates of periodic regions folded into [lo, lo + 2pi).
Vec canonical(const BifFunction& bf, const Box& region, const Vec& h) {
  Vec c = h;
  for (int i = 0; i < c.size(); ++i) {
    if (!full_period(bf, region, i)) continue;
    double w = std::fmod(c[i] - region.lo[i], kTwoPi);
    if (w < 0.0) w += kTwoPi;
    if (w >= kTwoPi) w -= kTwoPi;
    c[i] = region.lo[i] + w;
  }
  return c;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

struct NewtonOutcome {
  Vec h;
  double residual = 0.0;
  int iters = 0;
};

NewtonOutcome refine_zero(const BifFunction& bf, Vec h, const BifConfig& cfg) {
  Vec fh = bf(h);
  double rn = fh.norm();
  int it = 0;
  for (; it < cfg.newton_max_iter; ++it) {
    if (rn == 0.0) break;
    const Mat jac = central_jacobian(bf, h, cfg.fd_step);
    Eigen::JacobiSVD<Mat> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    const Vec step = svd.solve(-fh);
    double lambda = 1.0;
    Vec trial = h + step;
    Vec ft = bf(trial);
    while (!(ft.norm() < rn) && lambda > 1.0 / 64.0) {
      lambda *= 0.5;
      trial = h + lambda * step;
      ft = bf(trial);
    }
    if (!(ft.norm() < rn)) break;
    h = trial;
    fh = ft;
    rn = ft.norm();
    if (lambda * step.norm() <= 1e-13 * std::max(1.0, h.norm())) break;
  }
  return {h, rn, it};
}

}  // namespace

ZeroSearch find_zeros(const BifFunction& bf, const Box& region, const BifConfig& cfg) {
  const int k = bf.k;
  const int d = cfg.grid_density;
  ZeroSearch out;

  std::vector<int> nodes(k), cells(k);
  std::vector<bool> wraps(k);
  Vec width(k);
  for (int i = 0; i < k; ++i) {
    wraps[i] = full_period(bf, region, i);
    nodes[i] = wraps[i] ? d : d + 1;
    cells[i] = d;
    width[i] = (region.hi[i] - region.lo[i]) / d;
  }
  long total = 1;
  for (int i = 0; i < k; ++i) total *= nodes[i];
  out.grid_nodes = total;

  auto node_index = [&](const std::vector<int>& idx) {
    long flat = 0;
    for (int i = k - 1; i >= 0; --i) flat = flat * nodes[i] + (idx[i] % nodes[i]);
    return flat;
  };
  auto unflatten = [](long flat, const std::vector<int>& extent) {
    std::vector<int> idx(extent.size());
    for (std::size_t i = 0; i < extent.size(); ++i) {
      idx[i] = static_cast<int>(flat % extent[i]);
      flat /= extent[i];
    }
    return idx;
  };
  auto node_point = [&](const std::vector<int>& idx) {
    Vec p(k);
    for (int i = 0; i < k; ++i) p[i] = region.lo[i] + idx[i] * width[i];
    return p;
  };

  std::vector<Vec> values(static_cast<std::size_t>(total));
  parallel_for(values.size(), [&](std::size_t i) {
    values[i] = bf(node_point(unflatten(static_cast<long>(i), nodes)));
  });

  // Components that vanish on the whole grid make every zero non-isolated.
  for (int j = 0; j < k; ++j) {
    double mx = 0.0;
    for (const Vec& v : values) mx = std::max(mx, std::abs(v[j]));
    if (mx <= cfg.zero_tol) {
      out.non_isolated = true;
      out.non_isolated_reason = "component " + std::to_string(j + 1) + " vanishes on the grid";
    }
  }

  long cell_total = 1;
  for (int i = 0; i < k; ++i) cell_total *= cells[i];
  const int corners = 1 << k;
  auto corner_indices = [&](long cell) {
    const std::vector<int> base = unflatten(cell, cells);
    std::vector<long> ids;
    for (int c = 0; c < corners; ++c) {
      std::vector<int> idx = base;
      for (int i = 0; i < k; ++i) idx[i] += (c >> i) & 1;
      ids.push_back(node_index(idx));
    }
    return ids;
  };

  std::vector<long> candidates;
  for (long c = 0; c < cell_total; ++c) {
    const std::vector<long> ids = corner_indices(c);
    bool all = true;
    for (int j = 0; j < k && all; ++j) {
      double lo = 1e300, hi = -1e300;
      for (long id : ids) {
        lo = std::min(lo, values[id][j]);
        hi = std::max(hi, values[id][j]);
      }
      all = lo <= 0.0 && hi >= 0.0;
    }
    if (all) candidates.push_back(c);
  }
  out.candidate_cells = static_cast<long>(candidates.size());
  if (out.non_isolated && candidates.size() > 8) candidates.resize(8);

  std::vector<NewtonOutcome> refined(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    const Vec start = node_point(unflatten(candidates[i], cells)) + 0.5 * width;
    refined[i] = refine_zero(bf, start, cfg);
  });

  Box extended{region.lo - width, region.hi + width};
  std::vector<NewtonOutcome> accepted;
  for (NewtonOutcome& r : refined) {
    if (!(r.residual <= cfg.zero_tol)) continue;
    r.h = canonical(bf, region, r.h);
    bool inside = true;
    for (int i = 0; i < k; ++i)
      if (!wraps[i] && (r.h[i] < region.lo[i] || r.h[i] > region.hi[i])) inside = false;
    if (!inside || !extended.contains(r.h)) continue;
    auto dup = std::find_if(accepted.begin(), accepted.end(), [&](const NewtonOutcome& a) {
      return periodic_diff(bf, a.h, r.h).norm() < cfg.dedup_tol;
    });
    if (dup == accepted.end())
      accepted.push_back(r);
    else if (r.residual < dup->residual)
      *dup = r;
  }
  std::sort(accepted.begin(), accepted.end(), [](const NewtonOutcome& a, const NewtonOutcome& b) {
    return std::lexicographical_compare(a.h.data(), a.h.data() + a.h.size(), b.h.data(),
                                        b.h.data() + b.h.size());
  });
  if (static_cast<long>(accepted.size()) >= d) {
    out.non_isolated = true;
    out.non_isolated_reason = "distinct zeros fill the grid";
  }

  out.zeros.resize(accepted.size());
  const double local_radius = std::min(0.05, 0.25 * width.minCoeff());
  BifConfig local = cfg;
  local.edge_samples = 16;
  parallel_for(accepted.size(), [&](std::size_t i) {
    ZeroRecord& z = out.zeros[i];
    z.location = accepted[i].h;
    z.residual = accepted[i].residual;
    z.newton_iters = accepted[i].iters;
    z.jac_fd = central_jacobian(bf, z.location, cfg.fd_step);
    z.jac_det = z.jac_fd.determinant();
    const double scale = std::pow(std::max(z.jac_fd.norm(), 1e-300), k);
    z.jac_det_sign = std::abs(z.jac_det) <= cfg.det_rel_tol * scale ? 0 : sign_of(z.jac_det);
    if (out.non_isolated) return;
    try {
      z.local_degree = brouwer_degree(bf, Box::around(z.location, local_radius), local).degree;
      z.isolated = true;
    } catch (const BoundaryZero&) {
      z.isolated = false;
    } catch (const SingularZero&) {
      z.isolated = false;
    }
  });

  double grid_min = 1e300;
  for (long c = 0; c < cell_total; ++c) {
    const Vec lo = node_point(unflatten(c, cells));
    const bool has_zero = std::any_of(out.zeros.begin(), out.zeros.end(), [&](const ZeroRecord& z) {
      for (int i = 0; i < k; ++i) {
        double o = z.location[i] - lo[i];
        if (wraps[i]) {
          o = std::fmod(o, kTwoPi);
          if (o < 0.0) o += kTwoPi;
          if (o > kTwoPi - cfg.dedup_tol) o -= kTwoPi;
        }
        if (o < -cfg.dedup_tol || o > width[i] + cfg.dedup_tol) return false;
      }
      return true;
    });
    if (has_zero) continue;
    for (long id : corner_indices(c)) grid_min = std::min(grid_min, values[id].norm());
  }
  out.grid_min_without_zero = grid_min == 1e300 ? 0.0 : grid_min;
  return out;
}

namespace {

struct BoundarySample {
  double s;
  Vec v;
};

DegreeCertificate winding_degree(const BifFunction& bf, const Box& region, const BifConfig& cfg) {
  const Vec& lo = region.lo;
  const Vec& hi = region.hi;
  // Counter-clockwise boundary parametrized by s in [0, 4).
  auto point = [&](double s) {
    const int edge = std::min(3, static_cast<int>(std::floor(s)));
    const double f = s - edge;
    Vec p(2);
    switch (edge) {
      case 0: p << lo[0] + f * (hi[0] - lo[0]), lo[1]; break;
      case 1: p << hi[0], lo[1] + f * (hi[1] - lo[1]); break;
      case 2: p << hi[0] - f * (hi[0] - lo[0]), hi[1]; break;
      default: p << lo[0], hi[1] - f * (hi[1] - lo[1]); break;
    }
    return p;
  };
  const int m = 4 * cfg.edge_samples;
  std::vector<BoundarySample> samples(static_cast<std::size_t>(m));
  parallel_for(samples.size(), [&](std::size_t i) {
    const double s = 4.0 * static_cast<double>(i) / m;
    samples[i] = {s, bf(point(s))};
  });
  auto angle = [](const Vec& a, const Vec& b) {
    return std::atan2(a[0] * b[1] - a[1] * b[0], a.dot(b));
  };
  const double min_len = 4.0 / std::ldexp(1.0, cfg.max_refine_level);
  DegreeCertificate cert;
  cert.region = region;
  cert.method = "winding";
  for (;;) {
    std::vector<std::size_t> split;
    const std::size_t count = samples.size();
    for (std::size_t i = 0; i < count; ++i) {
      const BoundarySample& a = samples[i];
      const BoundarySample& b = samples[(i + 1) % count];
      if (std::abs(angle(a.v, b.v)) >= kPi / 2.0) split.push_back(i);
    }
    if (split.empty()) break;
    std::vector<BoundarySample> mids(split.size());
    for (std::size_t j = 0; j < split.size(); ++j) {
      const double s0 = samples[split[j]].s;
      const double s1 = split[j] + 1 == count ? 4.0 : samples[split[j] + 1].s;
      if (s1 - s0 < 2.0 * min_len)
        throw BoundaryZero("winding refinement exhausted near boundary parameter " +
                           std::to_string(s0));
      mids[j].s = 0.5 * (s0 + s1);
    }
    parallel_for(mids.size(), [&](std::size_t j) { mids[j].v = bf(point(mids[j].s)); });
    std::vector<BoundarySample> merged;
    merged.reserve(count + mids.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < count; ++i) {
      merged.push_back(std::move(samples[i]));
      if (next < split.size() && split[next] == i) merged.push_back(std::move(mids[next++]));
    }
    samples = std::move(merged);
  }
  double total = 0.0;
  double bmin = 1e300;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += angle(samples[i].v, samples[(i + 1) % samples.size()].v);
    bmin = std::min(bmin, samples[i].v.norm());
  }
  cert.boundary_min = bmin;
  cert.samples = static_cast<long>(samples.size());
  if (!(bmin > cfg.zero_tol))
    throw BoundaryZero("|M| = " + std::to_string(bmin) + " on the boundary");
  cert.degree = static_cast<int>(std::lround(total / kTwoPi));
  return cert;
}

}  // namespace

DegreeCertificate brouwer_degree(const BifFunction& bf, const Box& region, const BifConfig& cfg) {
  const int k = bf.k;
  if (k == 1) {
    const Vec a = bf(region.lo), b = bf(region.hi);
    DegreeCertificate cert;
    cert.region = region;
    cert.method = "boundary-signs";
    cert.samples = 2;
    cert.boundary_min = std::min(std::abs(a[0]), std::abs(b[0]));
    if (!(cert.boundary_min > cfg.zero_tol))
      throw BoundaryZero("|M| = " + std::to_string(cert.boundary_min) + " at an endpoint");
    cert.degree = (sign_of(b[0]) - sign_of(a[0])) / 2;
    return cert;
  }
  if (k == 2) return winding_degree(bf, region, cfg);

  DegreeCertificate cert;
  cert.region = region;
  cert.method = "regular-zeros-only";
  const ZeroSearch zs = find_zeros(bf, region, cfg);
  for (const ZeroRecord& z : zs.zeros) {
    if (z.jac_det_sign == 0) throw SingularZero("zero with singular Jacobian inside the region");
    cert.degree += z.jac_det_sign;
  }
  cert.samples = zs.grid_nodes;
  // Boundary minimum over the vertices and face centers of the box.
  double bmin = 1e300;
  const Vec c = region.center();
  for (int v = 0; v < (1 << k); ++v) {
    Vec p(k);
    for (int i = 0; i < k; ++i) p[i] = (v >> i) & 1 ? region.hi[i] : region.lo[i];
    bmin = std::min(bmin, bf(p).norm());
  }
  for (int i = 0; i < k; ++i) {
    Vec p = c;
    p[i] = region.lo[i];
    bmin = std::min(bmin, bf(p).norm());
    p[i] = region.hi[i];
    bmin = std::min(bmin, bf(p).norm());
  }
  cert.boundary_min = bmin;
  if (!(bmin > cfg.zero_tol)) throw BoundaryZero("|M| vanishes on the sampled boundary");
  return cert;
}

DilationEstimate dilation_estimate(const BifFunction& bf, const Vec& center, double radius,
                                   int pairs, std::uint64_t seed) {
  const int k = bf.k;
  Sampler rng(seed);
  std::vector<Vec> points;
  std::vector<std::pair<std::size_t, std::size_t>> links;
  for (int i = 0; i < pairs; ++i) {
    points.push_back(rng.in_ball(center, radius));
    points.push_back(rng.in_ball(center, radius));
    links.emplace_back(points.size() - 2, points.size() - 1);
  }
  // Axis neighbors on a 5^k lattice inside the ball.
  const int m = 5;
  long lattice = 1;
  for (int i = 0; i < k; ++i) lattice *= m;
  std::vector<long> slot(static_cast<std::size_t>(lattice), -1);
  const double spacing = 2.0 * radius / (m - 1);
  for (long flat = 0; flat < lattice; ++flat) {
    Vec p(k);
    long rest = flat;
    for (int i = 0; i < k; ++i) {
      p[i] = center[i] - radius + spacing * (rest % m);
      rest /= m;
    }
    if ((p - center).norm() > radius + 1e-12) continue;
    slot[flat] = static_cast<long>(points.size());
    points.push_back(p);
  }
  for (long flat = 0; flat < lattice; ++flat) {
    if (slot[flat] < 0) continue;
    long stride = 1;
    for (int i = 0; i < k; ++i, stride *= m) {
      const long digit = (flat / stride) % m;
      if (digit + 1 < m && slot[flat + stride] >= 0)
        links.emplace_back(static_cast<std::size_t>(slot[flat]),
                           static_cast<std::size_t>(slot[flat + stride]));
    }
  }
  std::vector<Vec> values(points.size());
  parallel_for(points.size(), [&](std::size_t i) { values[i] = bf(points[i]); });

  DilationEstimate est;
  est.center = center;
  est.radius = radius;
  est.l_lower = 1e300;
  for (const auto& [a, b] : links) {
    const double gap = (points[a] - points[b]).norm();
    if (gap == 0.0) continue;
    const double ratio = (values[a] - values[b]).norm() / gap;
    if (ratio < est.l_lower) {
      est.l_lower = ratio;
      est.arg_h1 = points[a];
      est.arg_h2 = points[b];
    }
    ++est.pairs;
  }
  if (est.pairs == 0) est.l_lower = 0.0;
  return est;
}

FamilyProjection project_to_family(const PeriodicFamily& family, const Vec& z,
                                   const Vec& h_guess) {
  Vec h = h_guess;
  for (int it = 0; it < 100; ++it) {
    const Vec r = family.xi(h) - z;
    const Vec step = family.dxi(h).colPivHouseholderQr().solve(-r);
    h += step;
    if (step.norm() <= 1e-15 * std::max(1.0, h.norm())) break;
  }
  return {h, (family.xi(h) - z).norm()};
}

NecessaryCheck necessary_condition_check(const BifFunction& bf, const PeriodicFamily& family,
                                         const Vec& z_limit, const Vec& h_guess,
                                         const BifConfig& cfg) {
  const FamilyProjection proj = project_to_family(family, z_limit, h_guess);
  if (!(proj.distance <= cfg.family_tol))
    throw NotOnFamily("point is " + std::to_string(proj.distance) + " from the family");
  NecessaryCheck out;
  out.h = proj.h;
  out.distance_to_family = proj.distance;
  out.value_norm = bf(proj.h).norm();
  out.tolerance = cfg.check_tol;
  out.holds = out.value_norm <= cfg.check_tol;
  return out;
}

}  // namespace malkin
