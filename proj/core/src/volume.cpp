#include "splatct/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "splatct/error.hpp"

namespace splatct {

bool Ellipsoid::contains(const Vec3& p) const {
  // sin of a negated angle is taken as the negated sine so mirrored ellipsoid
  // pairs stay bit-exact mirror images.
  const double c = std::cos(std::abs(angle));
  const double s = angle < 0.0 ? -std::sin(-angle) : std::sin(angle);
  const double dx = p.x() - center.x();
  const double dy = p.y() - center.y();
  const double dz = p.z() - center.z();
  const double xr = c * dx + s * dy;
  const double yr = -s * dx + c * dy;
  const double qx = xr / semi_axes.x();
  const double qy = yr / semi_axes.y();
  const double qz = dz / semi_axes.z();
  return qx * qx + qy * qy + qz * qz <= 1.0;
}

VoxelVolume normalize_hu(std::span<const double> raw, const GridDims& dims,
                         const Vec3& extent, double clip_lo, double clip_hi) {
  require(clip_lo < clip_hi, "clip_lo must be below clip_hi");
  require(raw.size() == dims.count(), "raw grid size does not match dims");
  VoxelVolume vol(dims, extent);
  const double width = clip_hi - clip_lo;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    require(std::isfinite(raw[i]), "non-finite HU value");
    vol.data[i] = std::clamp((raw[i] - clip_lo) / width, 0.0, 1.0);
  }
  return vol;
}

std::vector<Ellipsoid> shepp_logan_ellipsoids() {
  constexpr double deg = std::numbers::pi / 180.0;
  return {
      {1.0, {0.6900, 0.920, 0.810}, {0.0, 0.0, 0.0}, 0.0},
      {-0.8, {0.6624, 0.874, 0.780}, {0.0, -0.0184, 0.0}, 0.0},
      {-0.2, {0.1100, 0.310, 0.220}, {0.22, 0.0, 0.0}, -18.0 * deg},
      {-0.2, {0.1600, 0.410, 0.280}, {-0.22, 0.0, 0.0}, 18.0 * deg},
      {0.1, {0.2100, 0.250, 0.410}, {0.0, 0.35, -0.15}, 0.0},
      {0.1, {0.0460, 0.046, 0.050}, {0.0, 0.1, 0.25}, 0.0},
      {0.1, {0.0460, 0.046, 0.050}, {0.0, -0.1, 0.25}, 0.0},
      {0.1, {0.0460, 0.023, 0.050}, {-0.08, -0.605, 0.0}, 0.0},
      {0.1, {0.0230, 0.023, 0.020}, {0.0, -0.606, 0.0}, 0.0},
      {0.1, {0.0230, 0.046, 0.020}, {0.06, -0.605, 0.0}, 0.0},
  };
}

VoxelVolume rasterize_ellipsoids(const std::vector<Ellipsoid>& ellipsoids,
                                 const GridDims& dims, const Vec3& extent) {
  VoxelVolume vol(dims, extent);
  double peak = 0.0;
  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const Vec3 p(normalized_coordinate(x, dims.nx),
                     normalized_coordinate(y, dims.ny),
                     normalized_coordinate(z, dims.nz));
        double sum = 0.0;
        for (const auto& e : ellipsoids)
          if (e.contains(p)) sum += e.intensity;
        sum = std::max(sum, 0.0);
        vol.at(x, y, z) = sum;
        peak = std::max(peak, sum);
      }
    }
  }
  if (peak > 1.0)
    for (double& v : vol.data) v /= peak;
  return vol;
}

VoxelVolume shepp_logan_3d(const GridDims& dims, const Vec3& extent) {
  require(dims.nx >= 8 && dims.ny >= 8 && dims.nz >= 8,
          "phantom needs at least 8 voxels per axis");
  return rasterize_ellipsoids(shepp_logan_ellipsoids(), dims, extent);
}

VoxelVolume random_ellipsoid_phantom(const GridDims& dims, const Vec3& extent,
                                     std::uint64_t seed, int n_inner) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<Ellipsoid> ellipsoids;
  Ellipsoid body;
  body.intensity = between(0.3, 0.6);
  body.semi_axes = Vec3(between(0.6, 0.9), between(0.6, 0.9), between(0.6, 0.9));
  body.angle = between(-0.5, 0.5);
  ellipsoids.push_back(body);
  for (int k = 0; k < n_inner; ++k) {
    Ellipsoid e;
    e.intensity = between(-0.3, 0.4);
    e.semi_axes = Vec3(between(0.1, 0.35), between(0.1, 0.35), between(0.1, 0.35));
    e.center = Vec3(between(-0.35, 0.35), between(-0.35, 0.35), between(-0.35, 0.35));
    e.angle = between(-std::numbers::pi, std::numbers::pi);
    ellipsoids.push_back(e);
  }
  return rasterize_ellipsoids(ellipsoids, dims, extent);
}

SubVolumeSample sample_subvolume(const VoxelVolume& vol, int factor,
                                 std::uint64_t seed) {
  const GridDims& d = vol.dims;
  require(factor >= 1 && d.nx % factor == 0 && d.ny % factor == 0 &&
              d.nz % factor == 0,
          "sub-volume factor must divide every volume dimension");
  SubVolumeSample s;
  s.dims = {d.nx / factor, d.ny / factor, d.nz / factor};
  std::mt19937_64 rng(seed);
  const int span[3] = {d.nx - s.dims.nx, d.ny - s.dims.ny, d.nz - s.dims.nz};
  for (int a = 0; a < 3; ++a)
    s.origin[a] = std::uniform_int_distribution<int>(0, span[a])(rng);
  s.data.resize(s.dims.count());
  for (int z = 0; z < s.dims.nz; ++z)
    for (int y = 0; y < s.dims.ny; ++y)
      for (int x = 0; x < s.dims.nx; ++x)
        s.data[s.dims.index(x, y, z)] =
            vol.at(s.origin[0] + x, s.origin[1] + y, s.origin[2] + z);
  return s;
}

std::vector<double> add_projection_noise(std::span<const double> log_image,
                                         double i0, double gauss_sigma,
                                         std::uint64_t seed) {
  require(i0 > 0.0, "I0 must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double log_i0 = std::log(i0);
  std::vector<double> out(log_image.size());
  for (std::size_t i = 0; i < log_image.size(); ++i) {
    const double expected = i0 * std::exp(-log_image[i]);
    double counts = 0.0;
    if (expected > 0.0) {
      std::poisson_distribution<long long> poisson(expected);
      counts = static_cast<double>(poisson(rng));
    }
    counts += gauss_sigma * gauss(rng);
    counts = std::max(counts, 1.0);
    out[i] = log_i0 - std::log(counts);
  }
  return out;
}

}  // namespace splatct
