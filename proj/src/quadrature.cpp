#include "malkin/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "malkin/errors.hpp"

namespace malkin {

namespace {

GaussRule build_rule(int order) {
  GaussRule r{Vec(order), Vec(order)};
  for (int i = 0; i < order; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.nodes[i] = x;
    r.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

struct Panel {
  double a, b;
  Vec value;
  int depth;
};

Vec panel_rule(const VecIntegrand& fn, const GaussRule& rule, int dim, double a, double b,
               Vec& buf) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  Vec acc = Vec::Zero(dim);
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    fn(mid + half * rule.nodes[i], buf);
    acc += rule.weights[i] * buf;
  }
  return half * acc;
}

}  // namespace

const GaussRule& gauss_legendre(int order) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build_rule(order)).first;
  return it->second;
}

Vec integrate_composite(const VecIntegrand& fn, int dim, double a, double b, int panels,
                        int order) {
  const GaussRule& rule = gauss_legendre(order);
  Vec buf(dim);
  Vec total = Vec::Zero(dim);
  const double w = (b - a) / panels;
  for (int p = 0; p < panels; ++p) total += panel_rule(fn, rule, dim, a + p * w, a + (p + 1) * w, buf);
  return total;
}

QuadratureResult integrate_adaptive(const VecIntegrand& fn, int dim, double a, double b,
                                    const QuadratureConfig& cfg) {
  const GaussRule& rule = gauss_legendre(cfg.order);
  Vec buf(dim);
  QuadratureResult res;
  res.value = Vec::Zero(dim);
  const double span = b - a;
  std::vector<Panel> stack;
  const double w = span / cfg.panels;
  for (int p = cfg.panels - 1; p >= 0; --p) {
    const double pa = a + p * w, pb = a + (p + 1) * w;
    stack.push_back({pa, pb, panel_rule(fn, rule, dim, pa, pb, buf), 0});
    res.evaluations += cfg.order;
  }
  while (!stack.empty()) {
    Panel pan = std::move(stack.back());
    stack.pop_back();
    const double mid = 0.5 * (pan.a + pan.b);
    Vec left = panel_rule(fn, rule, dim, pan.a, mid, buf);
    Vec right = panel_rule(fn, rule, dim, mid, pan.b, buf);
    res.evaluations += 2L * cfg.order;
    const Vec refined = left + right;
    const double diff = (refined - pan.value).lpNorm<Eigen::Infinity>();
    const double budget = cfg.tol * (pan.b - pan.a) / span;
    if (diff <= budget) {
      res.value += refined;
      res.error_estimate += diff;
      ++res.panels;
      continue;
    }
    if (pan.depth >= cfg.max_depth)
      throw QuadratureNoConvergence("panel bisection exhausted near t=" + std::to_string(mid));
    stack.push_back({mid, pan.b, std::move(right), pan.depth + 1});
    stack.push_back({pan.a, mid, std::move(left), pan.depth + 1});
  }
  return res;
}

}  // namespace malkin
