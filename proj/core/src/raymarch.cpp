#include <algorithm>
#include <cmath>

#include "splatct/error.hpp"
#include "splatct/projector.hpp"

namespace splatct {

namespace {

// Parametric interval where the ray is inside the box, clipped to t >= 0.
bool clip_to_box(const Ray& ray, const Box& box, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < box.lo[a] || o > box.hi[a]) return false;
      continue;
    }
    double ta = (box.lo[a] - o) / d;
    double tb = (box.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

// Calls visit(t, weight) for each midpoint sample; weights are the
// effective step so the samples tile the chord exactly.
template <class Visit>
void march(const Ray& ray, const Box& box, double step, Visit&& visit) {
  double t0, t1;
  if (!clip_to_box(ray, box, t0, t1)) return;
  const double length = t1 - t0;
  const int n = std::max(1, static_cast<int>(std::ceil(length / step)));
  const double h = length / n;
  for (int k = 0; k < n; ++k) visit(ray.origin + (t0 + (k + 0.5) * h) * ray.direction, h);
}

struct Trilinear {
  std::size_t index[8];
  double weight[8];
};

void axis_weights(double g, int n, int& i0, int& i1, double& f) {
  if (n == 1) {
    i0 = i1 = 0;
    f = 0.0;
    return;
  }
  g = std::clamp(g, 0.0, static_cast<double>(n - 1));
  i0 = std::min(static_cast<int>(std::floor(g)), n - 2);
  i1 = i0 + 1;
  f = g - i0;
}

// Trilinear stencil at world point p; points between the outermost voxel
// centers and the box faces take the edge value.
Trilinear stencil(const GridDims& dims, const Vec3& extent, const Vec3& p) {
  const int n[3] = {dims.nx, dims.ny, dims.nz};
  int lo[3], hi[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double g = (p[a] + 0.5 * extent[a]) / extent[a] * n[a] - 0.5;
    axis_weights(g, n[a], lo[a], hi[a], f[a]);
  }
  Trilinear t;
  int k = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx, ++k) {
        const int x = dx ? hi[0] : lo[0];
        const int y = dy ? hi[1] : lo[1];
        const int z = dz ? hi[2] : lo[2];
        t.index[k] = dims.index(x, y, z);
        t.weight[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                      (dz ? f[2] : 1.0 - f[2]);
      }
  return t;
}

Box volume_box(const Vec3& extent) { return {-0.5 * extent, 0.5 * extent}; }

}  // namespace

Projection raymarch_project(const VoxelVolume& vol, const ScannerGeometry& geom,
                            const ViewPose& pose, double step) {
  require(step > 0.0, "ray-march step must be positive");
  require(vol.data.size() == vol.dims.count(), "volume data size mismatch");
  Projection out(geom.detector_nu, geom.detector_nv);
  const Box box = volume_box(vol.extent);
#pragma omp parallel for schedule(dynamic)
  for (int v = 0; v < out.nv; ++v) {
    for (int u = 0; u < out.nu; ++u) {
      const Ray ray = pixel_ray(pose, geom, u, v);
      double sum = 0.0;
      march(ray, box, step, [&](const Vec3& p, double h) {
        const Trilinear t = stencil(vol.dims, vol.extent, p);
        double s = 0.0;
        for (int k = 0; k < 8; ++k) s += t.weight[k] * vol.data[t.index[k]];
        sum += h * s;
      });
      out.at(u, v) = sum;
    }
  }
  return out;
}

Projection raymarch_project(const DensityField& field, const Box& box,
                            const ScannerGeometry& geom, const ViewPose& pose,
                            double step) {
  require(step > 0.0, "ray-march step must be positive");
  Projection out(geom.detector_nu, geom.detector_nv);
  for (int v = 0; v < out.nv; ++v) {
    for (int u = 0; u < out.nu; ++u) {
      const Ray ray = pixel_ray(pose, geom, u, v);
      double sum = 0.0;
      march(ray, box, step, [&](const Vec3& p, double h) { sum += h * field(p); });
      out.at(u, v) = sum;
    }
  }
  return out;
}

void raymarch_backproject(std::span<const double> pixels, const ScannerGeometry& geom,
                          const ViewPose& pose, double step, VoxelVolume& accum) {
  require(step > 0.0, "ray-march step must be positive");
  require(pixels.size() == static_cast<std::size_t>(geom.detector_nu) * geom.detector_nv,
          "pixel buffer does not match the detector");
  const Box box = volume_box(accum.extent);
  // Serial: scattered writes into the shared volume.
  for (int v = 0; v < geom.detector_nv; ++v) {
    for (int u = 0; u < geom.detector_nu; ++u) {
      const double value = pixels[static_cast<std::size_t>(v) * geom.detector_nu + u];
      if (value == 0.0) continue;
      const Ray ray = pixel_ray(pose, geom, u, v);
      march(ray, box, step, [&](const Vec3& p, double h) {
        const Trilinear t = stencil(accum.dims, accum.extent, p);
        for (int k = 0; k < 8; ++k) accum.data[t.index[k]] += h * value * t.weight[k];
      });
    }
  }
}

}  // namespace splatct
