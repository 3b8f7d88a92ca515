#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "splatct/geometry.hpp"

namespace splatct {

// Dense density grid, x fastest. The box is centered on the isocenter with
// side lengths `extent` (mm).
struct VoxelVolume {
  GridDims dims;
  Vec3 extent = Vec3::Zero();
  std::vector<double> data;

  VoxelVolume() = default;
  VoxelVolume(const GridDims& d, const Vec3& e, double fill = 0.0)
      : dims(d), extent(e), data(d.count(), fill) {}

  double& at(int x, int y, int z) { return data[dims.index(x, y, z)]; }
  double at(int x, int y, int z) const { return data[dims.index(x, y, z)]; }
  Vec3 pitch() const {
    return extent.cwiseQuotient(Vec3(dims.nx, dims.ny, dims.nz));
  }
};

struct SubVolumeSample {
  std::array<int, 3> origin{0, 0, 0};
  GridDims dims;
  std::vector<double> data;
};

// One ellipsoid of an analytic phantom in normalized [-1, 1]^3 coordinates.
// `angle` rotates the ellipsoid about the z axis (radians).
struct Ellipsoid {
  double intensity = 0.0;
  Vec3 semi_axes = Vec3::Ones();
  Vec3 center = Vec3::Zero();
  double angle = 0.0;

  bool contains(const Vec3& p) const;
};

// Maps HU to [0, 1] with clamping. Rejects non-finite input and lo >= hi.
VoxelVolume normalize_hu(std::span<const double> raw, const GridDims& dims,
                         const Vec3& extent, double clip_lo, double clip_hi);

// The ten ellipsoids of the (modified-contrast) 3D Shepp-Logan phantom.
std::vector<Ellipsoid> shepp_logan_ellipsoids();

// Sums ellipsoid intensities at voxel centers, clamps below at 0 and rescales
// so the maximum is at most 1.
VoxelVolume rasterize_ellipsoids(const std::vector<Ellipsoid>& ellipsoids,
                                 const GridDims& dims, const Vec3& extent);

// Requires at least 8 voxels per axis.
VoxelVolume shepp_logan_3d(const GridDims& dims, const Vec3& extent);

// Body ellipsoid plus `n_inner` random inner ellipsoids; deterministic in seed.
VoxelVolume random_ellipsoid_phantom(const GridDims& dims, const Vec3& extent,
                                     std::uint64_t seed, int n_inner = 4);

// Normalized coordinate of voxel index i on an axis with n voxels:
// (2i + 1 - n) / n, exactly antisymmetric under i -> n - 1 - i.
inline double normalized_coordinate(int i, int n) {
  return static_cast<double>(2 * i + 1 - n) / static_cast<double>(n);
}

// Contiguous block of dims/factor per side at a uniformly random origin.
SubVolumeSample sample_subvolume(const VoxelVolume& vol, int factor,
                                 std::uint64_t seed);

// Poisson + Gaussian detector noise applied through the Beer-Lambert model.
// Detected counts are floored at one photon before the log transform.
std::vector<double> add_projection_noise(std::span<const double> log_image,
                                         double i0, double gauss_sigma,
                                         std::uint64_t seed);

}  // namespace splatct
