#pragma once

#include <functional>

#include "malkin/types.hpp"

namespace malkin {

struct QuadratureConfig {
  int panels = 16;  ///< initial uniform panels
  int order = 16;   ///< Gauss-Legendre nodes per panel
  double tol = 1e-9;
  int max_depth = 48;
};

struct QuadratureResult {
  Vec value;
  double error_estimate = 0.0;
  long evaluations = 0;
  long panels = 0;
};

using VecIntegrand = std::function<void(double t, Eigen::Ref<Vec> out)>;

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  Vec nodes;
  Vec weights;
};
const GaussRule& gauss_legendre(int order);

/// Composite Gauss-Legendre on `panels` equal panels.
Vec integrate_composite(const VecIntegrand& fn, int dim, double a, double b, int panels,
                        int order = 16);

/// Composite Gauss-Legendre with local panel bisection: a panel is accepted
/// once the rule on the panel and on its two halves agree to within its share
/// of `cfg.tol`. Integrands with isolated kinks only refine around the kinks.
/// Throws QuadratureNoConvergence when max_depth is exhausted.
QuadratureResult integrate_adaptive(const VecIntegrand& fn, int dim, double a, double b,
                                    const QuadratureConfig& cfg = {});

}  // namespace malkin
