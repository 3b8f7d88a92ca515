#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "splatct/geometry.hpp"
#include "splatct/projector.hpp"
#include "splatct/voxgs.hpp"

namespace splatct::test {

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = u(rng);
  return out;
}

// Relative agreement with an absolute floor for entries near zero.
inline bool close(double a, double b, double rtol, double atol = 1e-12) {
  return std::abs(a - b) <= rtol * std::max(std::abs(a), std::abs(b)) + atol;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// Central difference of f at x along coordinate slot `v`.
template <class F>
double central_diff(F&& f, double& v, double h) {
  const double saved = v;
  v = saved + h;
  const double fp = f();
  v = saved - h;
  const double fm = f();
  v = saved;
  return (fp - fm) / (2.0 * h);
}

// Center uniform in a cube of side `box`, per-axis scales in [smin, smax].
inline GaussianView random_gaussian(std::mt19937_64& rng, double box, double smin, double smax) {
  std::uniform_real_distribution<double> p(-box / 2, box / 2), s(smin, smax), a(0.2, 1.0);
  std::normal_distribution<double> n;
  GaussianView g;
  g.mu = Vec3(p(rng), p(rng), p(rng));
  g.amplitude = a(rng);
  g.precision =
      covariance_from(Vec3(s(rng), s(rng), s(rng)), Vec4(n(rng), n(rng), n(rng), n(rng))).precision;
  return g;
}

inline ProjectionSet random_projection_set(const GridDims& dims, const Vec3& extent, int detector,
                                           int n_views, std::mt19937_64& rng) {
  ProjectionSet set;
  set.geometry = ScannerGeometry::for_volume(dims, extent, detector, detector,
                                             uniform_angles(n_views, 2.0 * std::numbers::pi));
  for (int k = 0; k < n_views; ++k) {
    Projection p;
    p.nu = detector;
    p.nv = detector;
    p.pose_index = k;
    p.angle = set.geometry.angles[k];
    p.data = random_values(static_cast<std::size_t>(detector) * detector, rng, 0.0, 2.0);
    set.views.push_back(std::move(p));
  }
  return set;
}

}  // namespace splatct::test
