#pragma once

#include <cstdint>
#include <random>

#include "malkin/types.hpp"

namespace malkin {

/// Seeded generator whose output is identical across standard libraries
/// (std::uniform_real_distribution is not).
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform point in the closed Euclidean ball of `radius` around `center`.
  Vec in_ball(const Vec& center, double radius) {
    const auto d = center.size();
    Vec p(d);
    do {
      for (Eigen::Index i = 0; i < d; ++i) p[i] = uniform(-1.0, 1.0);
    } while (p.squaredNorm() > 1.0);
    return center + radius * p;
  }

  Vec in_box(const Vec& lower, const Vec& upper) {
    Vec p(lower.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = uniform(lower[i], upper[i]);
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

/// Radical-inverse (Halton) point `index` in [0,1)^dim.
inline Vec halton(std::uint64_t index, int dim) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  Vec p(dim);
  for (int d = 0; d < dim; ++d) {
    const int base = kPrimes[d % 12];
    double f = 1.0, r = 0.0;
    for (std::uint64_t i = index + 1; i > 0; i /= base) {
      f /= base;
      r += f * static_cast<double>(i % base);
    }
    p[d] = r;
  }
  return p;
}

}  // namespace malkin
