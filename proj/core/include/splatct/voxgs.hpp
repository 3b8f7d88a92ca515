#pragma once

#include <cstddef>
#include <vector>

#include "splatct/geometry.hpp"
#include "splatct/volume.hpp"

namespace splatct {

// Minimum activated scale as a fraction of the voxel pitch.
inline constexpr double kMinScaleFraction = 0.1;
// Default initial scale as a fraction of the voxel pitch: 1/sqrt(2 pi), so a
// unit-opacity Gaussian carries the same mass as a unit voxel.
inline constexpr double kDefaultScaleFraction = 0.3989422804014327;

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

// A Gaussian resolved into world space: amplitude * exp(-0.5 r^T A r).
struct GaussianView {
  Vec3 mu = Vec3::Zero();
  double amplitude = 0.0;
  Mat3 precision = Mat3::Identity();
};

struct Covariance {
  Mat3 sigma;
  Mat3 precision;
};

// Voxel-anchored Gaussian set. Positions are not stored: Gaussian i sits at
// the centroid of voxel i. Opacity is unconstrained and clamped at zero on
// use; scales are s_min + softplus(scale_param); quaternions (w, x, y, z) are
// normalized on use.
class VoxGSCloud {
 public:
  VoxGSCloud() = default;
  // All-zero opacities, default scale, identity rotation.
  VoxGSCloud(const GridDims& dims, const Vec3& extent);

  const GridDims& dims() const { return dims_; }
  const Vec3& extent() const { return extent_; }
  std::size_t size() const { return alpha.size(); }

  double min_scale() const;
  Vec3 pitch() const;
  Vec3 centroid(std::size_t i) const;
  Vec3 scale(std::size_t i) const;
  Vec4 quaternion(std::size_t i) const;
  double amplitude(std::size_t i) const { return alpha[i] > 0.0 ? alpha[i] : 0.0; }
  GaussianView view(std::size_t i) const;

  std::vector<double> alpha;
  std::vector<double> scale_param;  // 3 per Gaussian
  std::vector<double> rot_param;    // 4 per Gaussian

 private:
  GridDims dims_;
  Vec3 extent_ = Vec3::Zero();
};

// extent * ((i + 0.5) / dim - 0.5) per axis.
Vec3 centroid_position(const GridDims& dims, const Vec3& extent, int x, int y, int z);

// Rotation of a unit quaternion (w, x, y, z).
Mat3 quaternion_to_rotation(const Vec4& unit_q);

// Sigma = R diag(s^2) R^T and its inverse. Rejects |q| < 1e-8 and s <= 0.
Covariance covariance_from(const Vec3& scale, const Vec4& quat);

// Chain rule of A = R(q / |q|) diag(s^-2) R^T. `d_precision` is dL/dA for a
// symmetric A; outputs dL/ds and dL/dq (raw, before normalization).
void precision_backward(const Vec3& scale, const Vec4& quat,
                        const Mat3& d_precision, Vec3& d_scale, Vec4& d_quat);

double default_scale_for(const GridDims& dims, const Vec3& extent);

VoxGSCloud voxgs_from_volume(const VoxelVolume& vol, double default_scale);
VoxGSCloud voxgs_from_volume(const VoxelVolume& vol);

struct ExtractStats {
  std::size_t opacity_reads = 0;
};

// V(x, y, z) = max(alpha_i, 0) for the Gaussian anchored at that voxel.
VoxelVolume extract_volume(const VoxGSCloud& cloud, ExtractStats* stats = nullptr);

double gaussian_density_at(const GaussianView& g, const Vec3& x);

}  // namespace splatct
