#include "splatct/projector.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "splatct/error.hpp"

namespace splatct {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;
constexpr int kTile = 16;

struct Footprint {
  int u0 = 0, u1 = -1, v0 = 0, v1 = -1;
  bool empty() const { return u1 < u0 || v1 < v0; }
};

// A Gaussian resolved against one view: the source-relative offset
// w = o - mu is shared by every ray of the view, so c = w^T A w and A w are
// computed once.
struct Prepared {
  std::uint32_t index = 0;
  double amplitude = 0.0;
  double a00, a01, a02, a11, a12, a22;
  Vec3 w;
  Vec3 aw;
  double c = 0.0;
  Footprint fp;
};

struct Detector {
  Vec3 origin;
  std::vector<Vec3> dirs;
  int nu = 0;
  int nv = 0;
};

Detector make_detector(const ScannerGeometry& geom, const ViewPose& pose) {
  Detector det;
  det.nu = geom.detector_nu;
  det.nv = geom.detector_nv;
  det.origin = pose.source_position();
  det.dirs.resize(static_cast<std::size_t>(det.nu) * det.nv);
  const Mat3 kinv = pose.intrinsics.inverse();
  const Mat3 to_world = pose.rotation.transpose() * kinv;
  for (int v = 0; v < det.nv; ++v)
    for (int u = 0; u < det.nu; ++u)
      det.dirs[static_cast<std::size_t>(v) * det.nu + u] =
          (to_world * Vec3(u + 0.5, v + 0.5, 1.0)).normalized();
  return det;
}

int first_pixel(double lo, int n) {
  return std::clamp(static_cast<int>(std::ceil(lo - 0.5)), 0, n);
}
int last_pixel(double hi, int n) {
  return std::clamp(static_cast<int>(std::floor(hi - 0.5)), -1, n - 1);
}

// Pixels whose centers lie inside the image of a sphere of `radius` around
// mu. Conservative for zero-skew intrinsics.
Footprint footprint(const Vec3& mu, double radius, const ViewPose& pose, int nu, int nv) {
  Footprint fp;
  const Vec3 xc = pose.rotation * mu + pose.translation;
  const Mat3& k = pose.intrinsics;
  const double near = xc.z() - radius;
  if (!(near > 1e-9 * std::max(1.0, xc.z())) || !std::isfinite(radius)) {
    fp.u0 = 0; fp.u1 = nu - 1; fp.v0 = 0; fp.v1 = nv - 1;
    return fp;
  }
  const double far = xc.z() + radius;
  auto range = [&](double center, double f, double c, int n, int& lo, int& hi) {
    const double a = center - radius;
    const double b = center + radius;
    const double mn = std::min(a / near, a / far);
    const double mx = std::max(b / near, b / far);
    lo = first_pixel(f * mn + c, n);
    hi = last_pixel(f * mx + c, n);
  };
  range(xc.x(), k(0, 0), k(0, 2), nu, fp.u0, fp.u1);
  range(xc.y(), k(1, 1), k(1, 2), nv, fp.v0, fp.v1);
  return fp;
}

Prepared prepare(std::uint32_t index, double amplitude, const Vec3& mu, const Mat3& a,
                 double radius, const Detector& det, const ViewPose& pose) {
  Prepared p;
  p.index = index;
  p.amplitude = amplitude;
  p.a00 = a(0, 0); p.a01 = 0.5 * (a(0, 1) + a(1, 0)); p.a02 = 0.5 * (a(0, 2) + a(2, 0));
  p.a11 = a(1, 1); p.a12 = 0.5 * (a(1, 2) + a(2, 1)); p.a22 = a(2, 2);
  p.w = det.origin - mu;
  p.aw = Vec3(p.a00 * p.w.x() + p.a01 * p.w.y() + p.a02 * p.w.z(),
              p.a01 * p.w.x() + p.a11 * p.w.y() + p.a12 * p.w.z(),
              p.a02 * p.w.x() + p.a12 * p.w.y() + p.a22 * p.w.z());
  p.c = p.w.dot(p.aw);
  p.fp = footprint(mu, radius, pose, det.nu, det.nv);
  return p;
}

struct RayTerms {
  double a;
  double b;
  double unit;  // line integral per unit amplitude
};

inline bool evaluate(const Prepared& g, const Vec3& d, double cutoff2, RayTerms& t) {
  const double adx = g.a00 * d.x() + g.a01 * d.y() + g.a02 * d.z();
  const double ady = g.a01 * d.x() + g.a11 * d.y() + g.a12 * d.z();
  const double adz = g.a02 * d.x() + g.a12 * d.y() + g.a22 * d.z();
  t.a = d.x() * adx + d.y() * ady + d.z() * adz;
  t.b = d.dot(g.aw);
  const double m = g.c - t.b * t.b / t.a;
  if (m > cutoff2) return false;
  t.unit = kSqrt2Pi / std::sqrt(t.a) * std::exp(-0.5 * m);
  return true;
}

double cutoff_squared(const SplatOptions& opts) {
  require(opts.cutoff > 0.0, "cutoff must be positive");
  return opts.cutoff >= 1e150 ? kNoCutoff : opts.cutoff * opts.cutoff;
}

double footprint_radius(const SplatOptions& opts, double max_scale) {
  return opts.cutoff >= 1e150 ? std::numeric_limits<double>::infinity()
                              : opts.cutoff * max_scale;
}

void render(const std::vector<Prepared>& gaussians, const Detector& det,
            const SplatOptions& opts, Projection& out) {
  const double cutoff2 = cutoff_squared(opts);
  const int nu = det.nu;
  if (opts.deterministic) {
    const int tiles_u = (det.nu + kTile - 1) / kTile;
    const int tiles_v = (det.nv + kTile - 1) / kTile;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_u) * tiles_v);
    for (std::uint32_t gi = 0; gi < gaussians.size(); ++gi) {
      const Footprint& fp = gaussians[gi].fp;
      if (fp.empty()) continue;
      for (int tv = fp.v0 / kTile; tv <= fp.v1 / kTile; ++tv)
        for (int tu = fp.u0 / kTile; tu <= fp.u1 / kTile; ++tu)
          bins[static_cast<std::size_t>(tv) * tiles_u + tu].push_back(gi);
    }
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < tiles_u * tiles_v; ++t) {
      const int tu0 = (t % tiles_u) * kTile;
      const int tv0 = (t / tiles_u) * kTile;
      RayTerms rt;
      for (std::uint32_t gi : bins[t]) {
        const Prepared& g = gaussians[gi];
        const int v_end = std::min(g.fp.v1, tv0 + kTile - 1);
        const int u_end = std::min(g.fp.u1, tu0 + kTile - 1);
        for (int v = std::max(g.fp.v0, tv0); v <= v_end; ++v) {
          for (int u = std::max(g.fp.u0, tu0); u <= u_end; ++u) {
            const std::size_t p = static_cast<std::size_t>(v) * nu + u;
            if (evaluate(g, det.dirs[p], cutoff2, rt)) out.data[p] += g.amplitude * rt.unit;
          }
        }
      }
    }
    return;
  }
#pragma omp parallel
  {
    std::vector<double> local(out.data.size(), 0.0);
    RayTerms rt;
#pragma omp for schedule(static) nowait
    for (std::int64_t gi = 0; gi < static_cast<std::int64_t>(gaussians.size()); ++gi) {
      const Prepared& g = gaussians[gi];
      for (int v = g.fp.v0; v <= g.fp.v1; ++v) {
        for (int u = g.fp.u0; u <= g.fp.u1; ++u) {
          const std::size_t p = static_cast<std::size_t>(v) * nu + u;
          if (evaluate(g, det.dirs[p], cutoff2, rt)) local[p] += g.amplitude * rt.unit;
        }
      }
    }
#pragma omp critical
    for (std::size_t p = 0; p < local.size(); ++p) out.data[p] += local[p];
  }
}

}  // namespace

void ProjectionSet::validate() const {
  require(views.size() == geometry.angles.size(), "one geometry angle per view required");
  for (std::size_t k = 0; k < views.size(); ++k) {
    require(views[k].nu == geometry.detector_nu && views[k].nv == geometry.detector_nv,
            "projection dims do not match the detector");
    require(views[k].data.size() == static_cast<std::size_t>(views[k].nu) * views[k].nv,
            "projection data size mismatch");
    for (std::size_t j = 0; j < k; ++j)
      require(views[j].pose_index != views[k].pose_index, "duplicate pose index");
  }
}

ProjectionSet ProjectionSet::subset(std::span<const int> view_positions) const {
  ProjectionSet out;
  out.geometry = geometry;
  out.geometry.angles.clear();
  for (int k : view_positions) {
    require(k >= 0 && static_cast<std::size_t>(k) < views.size(), "view position out of range");
    out.views.push_back(views[k]);
    out.geometry.angles.push_back(geometry.angles[k]);
  }
  return out;
}

GradientBuffer& GradientBuffer::operator+=(const GradientBuffer& other) {
  require(other.size() == size(), "gradient buffer size mismatch");
  for (std::size_t i = 0; i < d_alpha.size(); ++i) d_alpha[i] += other.d_alpha[i];
  for (std::size_t i = 0; i < d_scale_param.size(); ++i) d_scale_param[i] += other.d_scale_param[i];
  for (std::size_t i = 0; i < d_rot_param.size(); ++i) d_rot_param[i] += other.d_rot_param[i];
  return *this;
}

double ray_gaussian_integral(const GaussianView& g, const Ray& ray) {
  const Vec3 w = ray.origin - g.mu;
  const Vec3 ad = g.precision * ray.direction;
  const double a = ray.direction.dot(ad);
  assert(a > 0.0);
  const double b = ad.dot(w);
  const double c = w.dot(g.precision * w);
  return g.amplitude * std::sqrt(2.0 * std::numbers::pi / a) * std::exp(-0.5 * (c - b * b / a));
}

Projection splat_gaussians(std::span<const GaussianView> gaussians,
                           const ScannerGeometry& geom, const ViewPose& pose,
                           const SplatOptions& opts) {
  const Detector det = make_detector(geom, pose);
  std::vector<Prepared> prepared;
  prepared.reserve(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const GaussianView& g = gaussians[i];
    if (g.amplitude == 0.0) continue;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(g.precision, Eigen::EigenvaluesOnly);
    const double max_scale = 1.0 / std::sqrt(eig.eigenvalues().minCoeff());
    prepared.push_back(prepare(static_cast<std::uint32_t>(i), g.amplitude, g.mu, g.precision,
                               footprint_radius(opts, max_scale), det, pose));
  }
  Projection out(det.nu, det.nv);
  render(prepared, det, opts, out);
  return out;
}

namespace {

std::vector<Prepared> prepare_cloud(const VoxGSCloud& cloud, const Detector& det,
                                    const ViewPose& pose, const SplatOptions& opts,
                                    bool include_zero) {
  std::vector<Prepared> prepared;
  prepared.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double alpha = cloud.alpha[i];
    if (alpha < 0.0 || (alpha == 0.0 && !include_zero)) continue;
    const Vec3 s = cloud.scale(i);
    const Mat3 a = covariance_from(s, cloud.quaternion(i)).precision;
    prepared.push_back(prepare(static_cast<std::uint32_t>(i), alpha, cloud.centroid(i), a,
                               footprint_radius(opts, s.maxCoeff()), det, pose));
  }
  return prepared;
}

}  // namespace

Projection splat_project(const VoxGSCloud& cloud, const ScannerGeometry& geom,
                         const ViewPose& pose, const SplatOptions& opts) {
  const Detector det = make_detector(geom, pose);
  const std::vector<Prepared> prepared = prepare_cloud(cloud, det, pose, opts, false);
  Projection out(det.nu, det.nv);
  render(prepared, det, opts, out);
  return out;
}

void splat_project_backward_accumulate(const VoxGSCloud& cloud, const ScannerGeometry& geom,
                                       const ViewPose& pose,
                                       std::span<const double> d_loss_d_pixels,
                                       GradientBuffer& out, const SplatOptions& opts) {
  require(d_loss_d_pixels.size() ==
              static_cast<std::size_t>(geom.detector_nu) * geom.detector_nv,
          "pixel gradient does not match the detector");
  require(out.size() == cloud.size(), "gradient buffer does not match the cloud");
  const Detector det = make_detector(geom, pose);
  const std::vector<Prepared> prepared = prepare_cloud(cloud, det, pose, opts, true);
  const double cutoff2 = cutoff_squared(opts);
  const int nu = det.nu;

#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(prepared.size()); ++k) {
    const Prepared& g = prepared[k];
    double d_alpha = 0.0;
    // dL/dA = Mdd + sym(vdw w^T) - 0.5 * sum_gi * w w^T
    double m00 = 0, m01 = 0, m02 = 0, m11 = 0, m12 = 0, m22 = 0;
    Vec3 vdw = Vec3::Zero();
    double sum_gi = 0.0;
    RayTerms rt;
    for (int v = g.fp.v0; v <= g.fp.v1; ++v) {
      for (int u = g.fp.u0; u <= g.fp.u1; ++u) {
        const std::size_t p = static_cast<std::size_t>(v) * nu + u;
        const double up = d_loss_d_pixels[p];
        if (up == 0.0) continue;
        const Vec3& d = det.dirs[p];
        if (!evaluate(g, d, cutoff2, rt)) continue;
        d_alpha += up * rt.unit;
        if (g.amplitude == 0.0) continue;
        const double gi = up * g.amplitude * rt.unit;
        const double inv_a = 1.0 / rt.a;
        const double ka = gi * (-0.5 * inv_a - 0.5 * rt.b * rt.b * inv_a * inv_a);
        const double kb = gi * rt.b * inv_a;
        m00 += ka * d.x() * d.x(); m01 += ka * d.x() * d.y(); m02 += ka * d.x() * d.z();
        m11 += ka * d.y() * d.y(); m12 += ka * d.y() * d.z(); m22 += ka * d.z() * d.z();
        vdw += kb * d;
        sum_gi += gi;
      }
    }
    const std::size_t i = g.index;
    out.d_alpha[i] += d_alpha;
    if (g.amplitude == 0.0) continue;
    Mat3 d_prec;
    d_prec << m00, m01, m02, m01, m11, m12, m02, m12, m22;
    const Mat3 cross = vdw * g.w.transpose();
    d_prec += 0.5 * (cross + cross.transpose()) - 0.5 * sum_gi * g.w * g.w.transpose();

    Vec3 d_scale;
    Vec4 d_quat;
    precision_backward(cloud.scale(i), cloud.quaternion(i), d_prec, d_scale, d_quat);
    for (int a = 0; a < 3; ++a)
      out.d_scale_param[3 * i + a] += d_scale[a] * sigmoid(cloud.scale_param[3 * i + a]);
    for (int a = 0; a < 4; ++a) out.d_rot_param[4 * i + a] += d_quat[a];
  }
}

GradientBuffer splat_project_backward(const VoxGSCloud& cloud, const ScannerGeometry& geom,
                                      const ViewPose& pose,
                                      std::span<const double> d_loss_d_pixels,
                                      const SplatOptions& opts) {
  GradientBuffer out(cloud.size());
  splat_project_backward_accumulate(cloud, geom, pose, d_loss_d_pixels, out, opts);
  return out;
}

double beer_lambert(double i0, double line_integral) {
  require(i0 > 0.0, "I0 must be positive");
  return i0 * std::exp(-line_integral);
}

double log_transform(double i0, double detected) {
  require(i0 > 0.0, "I0 must be positive");
  require(detected > 0.0, "detected intensity must be positive");
  return std::log(i0) - std::log(detected);
}

}  // namespace splatct
