#include "splatct/voxgs.hpp"

#include <cmath>

#include "splatct/error.hpp"

namespace splatct {

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  require(y > 0.0, "softplus inverse needs a positive argument");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

VoxGSCloud::VoxGSCloud(const GridDims& dims, const Vec3& extent)
    : alpha(dims.count(), 0.0),
      scale_param(3 * dims.count()),
      rot_param(4 * dims.count(), 0.0),
      dims_(dims),
      extent_(extent) {
  const double p = softplus_inverse(default_scale_for(dims, extent) - min_scale());
  std::fill(scale_param.begin(), scale_param.end(), p);
  for (std::size_t i = 0; i < size(); ++i) rot_param[4 * i] = 1.0;
}

Vec3 VoxGSCloud::pitch() const {
  return extent_.cwiseQuotient(Vec3(dims_.nx, dims_.ny, dims_.nz));
}

double VoxGSCloud::min_scale() const { return kMinScaleFraction * pitch().minCoeff(); }

Vec3 VoxGSCloud::centroid(std::size_t i) const {
  const auto nx = static_cast<std::size_t>(dims_.nx);
  const auto ny = static_cast<std::size_t>(dims_.ny);
  const int x = static_cast<int>(i % nx);
  const int y = static_cast<int>((i / nx) % ny);
  const int z = static_cast<int>(i / (nx * ny));
  return centroid_position(dims_, extent_, x, y, z);
}

Vec3 VoxGSCloud::scale(std::size_t i) const {
  const double s0 = min_scale();
  return Vec3(s0 + softplus(scale_param[3 * i]), s0 + softplus(scale_param[3 * i + 1]),
              s0 + softplus(scale_param[3 * i + 2]));
}

Vec4 VoxGSCloud::quaternion(std::size_t i) const {
  return Vec4(rot_param[4 * i], rot_param[4 * i + 1], rot_param[4 * i + 2],
              rot_param[4 * i + 3]);
}

GaussianView VoxGSCloud::view(std::size_t i) const {
  GaussianView g;
  g.mu = centroid(i);
  g.amplitude = amplitude(i);
  g.precision = covariance_from(scale(i), quaternion(i)).precision;
  return g;
}

Vec3 centroid_position(const GridDims& dims, const Vec3& extent, int x, int y, int z) {
  require(dims.contains(x, y, z), "voxel index out of range");
  return Vec3(extent.x() * ((x + 0.5) / dims.nx - 0.5),
              extent.y() * ((y + 0.5) / dims.ny - 0.5),
              extent.z() * ((z + 0.5) / dims.nz - 0.5));
}

Mat3 quaternion_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Covariance covariance_from(const Vec3& scale, const Vec4& quat) {
  const double norm = quat.norm();
  require(norm >= 1e-8, "quaternion is too close to zero");
  require((scale.array() > 0.0).all(), "scales must be positive");
  const Mat3 r = quaternion_to_rotation(quat / norm);
  const Vec3 s2 = scale.cwiseProduct(scale);
  Covariance c;
  c.sigma = r * s2.asDiagonal() * r.transpose();
  c.precision = r * s2.cwiseInverse().asDiagonal() * r.transpose();
  return c;
}

void precision_backward(const Vec3& scale, const Vec4& quat, const Mat3& d_precision,
                        Vec3& d_scale, Vec4& d_quat) {
  const double norm = quat.norm();
  const Vec4 q = quat / norm;
  const Mat3 r = quaternion_to_rotation(q);
  const Vec3 inv_s2 = scale.cwiseProduct(scale).cwiseInverse();

  for (int k = 0; k < 3; ++k) {
    const Vec3 rk = r.col(k);
    d_scale[k] = -2.0 * rk.dot(d_precision * rk) * inv_s2[k] / scale[k];
  }

  const Mat3 d_r = 2.0 * d_precision * r * inv_s2.asDiagonal();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 dw, dx, dy, dz;
  dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  const Vec4 d_unit(d_r.cwiseProduct(dw).sum(), d_r.cwiseProduct(dx).sum(),
                    d_r.cwiseProduct(dy).sum(), d_r.cwiseProduct(dz).sum());
  d_quat = (d_unit - q * q.dot(d_unit)) / norm;
}

double default_scale_for(const GridDims& dims, const Vec3& extent) {
  return kDefaultScaleFraction *
         extent.cwiseQuotient(Vec3(dims.nx, dims.ny, dims.nz)).minCoeff();
}

VoxGSCloud voxgs_from_volume(const VoxelVolume& vol, double default_scale) {
  VoxGSCloud cloud(vol.dims, vol.extent);
  require(default_scale > cloud.min_scale(), "default scale must exceed the minimum scale");
  cloud.alpha = vol.data;
  const double p = softplus_inverse(default_scale - cloud.min_scale());
  std::fill(cloud.scale_param.begin(), cloud.scale_param.end(), p);
  return cloud;
}

VoxGSCloud voxgs_from_volume(const VoxelVolume& vol) {
  return voxgs_from_volume(vol, default_scale_for(vol.dims, vol.extent));
}

VoxelVolume extract_volume(const VoxGSCloud& cloud, ExtractStats* stats) {
  VoxelVolume vol(cloud.dims(), cloud.extent());
  for (std::size_t i = 0; i < cloud.size(); ++i) vol.data[i] = cloud.amplitude(i);
  if (stats) stats->opacity_reads += cloud.size();
  return vol;
}

double gaussian_density_at(const GaussianView& g, const Vec3& x) {
  const Vec3 r = x - g.mu;
  return g.amplitude * std::exp(-0.5 * r.dot(g.precision * r));
}

}  // namespace splatct
