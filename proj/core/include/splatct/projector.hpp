#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "splatct/geometry.hpp"
#include "splatct/volume.hpp"
#include "splatct/voxgs.hpp"

namespace splatct {

// Log-domain detector image, u fastest.
struct Projection {
  int nu = 0;
  int nv = 0;
  std::vector<double> data;
  int pose_index = 0;
  double angle = 0.0;

  Projection() = default;
  Projection(int nu_, int nv_, int index = 0, double angle_ = 0.0)
      : nu(nu_), nv(nv_), data(static_cast<std::size_t>(nu_) * nv_, 0.0),
        pose_index(index), angle(angle_) {}

  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * nu + u]; }
  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * nu + u]; }
};

// Projections together with the geometry that produced them. geometry.angles
// holds one angle per view, in view order.
struct ProjectionSet {
  ScannerGeometry geometry;
  std::vector<Projection> views;

  std::vector<ViewPose> poses() const { return trajectory_poses(geometry); }
  // Shared detector dims, distinct pose indices, one angle per view.
  void validate() const;
  // The subset of views at the given positions, re-indexed in that order.
  ProjectionSet subset(std::span<const int> view_positions) const;
};

struct GradientBuffer {
  std::vector<double> d_alpha;
  std::vector<double> d_scale_param;
  std::vector<double> d_rot_param;

  GradientBuffer() = default;
  explicit GradientBuffer(std::size_t n)
      : d_alpha(n, 0.0), d_scale_param(3 * n, 0.0), d_rot_param(4 * n, 0.0) {}
  std::size_t size() const { return d_alpha.size(); }
  GradientBuffer& operator+=(const GradientBuffer& other);
};

struct SplatOptions {
  // Gaussians whose closest approach to a ray exceeds this Mahalanobis
  // distance are skipped for that ray, in both passes.
  double cutoff = 6.0;
  // Gather per detector tile, summing each pixel in Gaussian-index order.
  // Otherwise Gaussians scatter into per-thread buffers.
  bool deterministic = true;
};

inline constexpr double kNoCutoff = 1e300;

// Integral of g along the full line o + t d (d unit):
// amplitude * sqrt(2 pi / a) * exp(-(c - b^2 / a) / 2).
double ray_gaussian_integral(const GaussianView& g, const Ray& ray);

// Renders arbitrary Gaussians. The VoxGSCloud overload below is the
// production entry point; this one backs oracles and equivariance checks.
Projection splat_gaussians(std::span<const GaussianView> gaussians,
                           const ScannerGeometry& geom, const ViewPose& pose,
                           const SplatOptions& opts = {});

Projection splat_project(const VoxGSCloud& cloud, const ScannerGeometry& geom,
                         const ViewPose& pose, const SplatOptions& opts = {});

// Reverse pass of splat_project for upstream dL/dpixel. Opacities below zero
// receive zero gradient; scales chain through softplus and quaternions
// through normalization.
GradientBuffer splat_project_backward(const VoxGSCloud& cloud,
                                      const ScannerGeometry& geom,
                                      const ViewPose& pose,
                                      std::span<const double> d_loss_d_pixels,
                                      const SplatOptions& opts = {});

// Same as above, adding into an existing buffer.
void splat_project_backward_accumulate(const VoxGSCloud& cloud,
                                       const ScannerGeometry& geom,
                                       const ViewPose& pose,
                                       std::span<const double> d_loss_d_pixels,
                                       GradientBuffer& out,
                                       const SplatOptions& opts = {});

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

using DensityField = std::function<double(const Vec3&)>;

// Midpoint-rule line integrals through the volume box. Grid samples are
// trilinear with clamp-to-edge inside the box and zero outside it.
Projection raymarch_project(const VoxelVolume& vol, const ScannerGeometry& geom,
                            const ViewPose& pose, double step);

// Same for an analytic field integrated across `box`.
Projection raymarch_project(const DensityField& field, const Box& box,
                            const ScannerGeometry& geom, const ViewPose& pose,
                            double step);

// Exact adjoint of the grid raymarch_project: adds A^T pixels into `accum`.
void raymarch_backproject(std::span<const double> pixels, const ScannerGeometry& geom,
                          const ViewPose& pose, double step, VoxelVolume& accum);

double beer_lambert(double i0, double line_integral);
double log_transform(double i0, double detected);

}  // namespace splatct
