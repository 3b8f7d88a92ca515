#include "splatct/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <string>

#include "splatct/error.hpp"

namespace splatct {

namespace {

constexpr double kDepthEpsilon = 1e-9;

}  // namespace

void ScannerGeometry::validate() const {
  require(dso > 0.0, "dso must be positive");
  require(dsd > dso, "dsd must exceed dso");
  require(detector_nu >= 1 && detector_nv >= 1, "detector pixel counts must be >= 1");
  require(detector_du > 0.0 && detector_dv > 0.0, "detector pitch must be positive");
  require(volume_dims.nx >= 1 && volume_dims.ny >= 1 && volume_dims.nz >= 1,
          "volume dims must be >= 1");
  require((volume_extent.array() > 0.0).all(), "volume extent must be positive");
  // The corner voxel centroid is the farthest one from the isocenter.
  const Vec3 pitch = voxel_pitch();
  const Vec3 corner = 0.5 * (volume_extent - pitch);
  require(corner.norm() < dso, "volume does not fit inside the source orbit");
  for (double a : angles) require(std::isfinite(a), "angles must be finite");
}

ScannerGeometry ScannerGeometry::for_volume(const GridDims& dims,
                                            const Vec3& extent, int nu, int nv,
                                            std::vector<double> angles) {
  ScannerGeometry g;
  const double e = extent.maxCoeff();
  g.dso = 2.0 * e;
  g.dsd = 3.0 * e;
  g.detector_nu = nu;
  g.detector_nv = nv;
  // Half-width of the cone tangent to a sphere of radius e/2, on the detector.
  const double r = 0.5 * e;
  const double half = g.dsd * r / std::sqrt(g.dso * g.dso - r * r);
  g.detector_du = 2.0 * half / nu;
  g.detector_dv = 2.0 * half / nv;
  g.volume_dims = dims;
  g.volume_extent = extent;
  g.angles = std::move(angles);
  g.validate();
  return g;
}

Mat34 projection_matrix(const ViewPose& pose) {
  Mat34 rt;
  rt.leftCols<3>() = pose.rotation;
  rt.col(3) = pose.translation;
  return pose.intrinsics * rt;
}

ViewPose pose_at_angle(const ScannerGeometry& geom, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const Vec3 source(geom.dso * c, geom.dso * s, 0.0);
  // Camera basis: z toward the isocenter, y along +z world, x = y cross z.
  const Vec3 ez(-c, -s, 0.0);
  const Vec3 ey(0.0, 0.0, 1.0);
  const Vec3 ex = ey.cross(ez);

  ViewPose pose;
  pose.rotation.row(0) = ex.transpose();
  pose.rotation.row(1) = ey.transpose();
  pose.rotation.row(2) = ez.transpose();
  pose.translation = -pose.rotation * source;
  pose.intrinsics << geom.dsd / geom.detector_du, 0.0, 0.5 * geom.detector_nu,
      0.0, geom.dsd / geom.detector_dv, 0.5 * geom.detector_nv,
      0.0, 0.0, 1.0;
  return pose;
}

std::vector<double> uniform_angles(int n_views, double arc) {
  require(n_views >= 1, "n_views must be >= 1");
  require(arc > 0.0 && arc <= 2.0 * std::numbers::pi + 1e-12,
          "arc must lie in (0, 2*pi]");
  std::vector<double> angles(n_views);
  for (int k = 0; k < n_views; ++k) angles[k] = k * arc / n_views;
  return angles;
}

std::vector<ViewPose> circular_trajectory(const ScannerGeometry& geom,
                                          int n_views, double arc) {
  std::vector<ViewPose> poses;
  for (double a : uniform_angles(n_views, arc)) poses.push_back(pose_at_angle(geom, a));
  return poses;
}

std::vector<ViewPose> trajectory_poses(const ScannerGeometry& geom) {
  std::vector<ViewPose> poses;
  poses.reserve(geom.angles.size());
  for (double a : geom.angles) poses.push_back(pose_at_angle(geom, a));
  return poses;
}

Ray detector_ray(const ViewPose& pose, double u, double v) {
  const Vec3 cam = pose.intrinsics.triangularView<Eigen::Upper>().solve(Vec3(u, v, 1.0));
  Ray ray;
  ray.origin = pose.source_position();
  ray.direction = (pose.rotation.transpose() * cam).normalized();
  return ray;
}

Ray pixel_ray(const ViewPose& pose, const ScannerGeometry& geom, int u, int v) {
  require(u >= 0 && u < geom.detector_nu && v >= 0 && v < geom.detector_nv,
          "pixel index out of range: (" + std::to_string(u) + ", " +
              std::to_string(v) + ")");
  return detector_ray(pose, u + 0.5, v + 0.5);
}

PluckerEmbedding plucker_embedding(const Ray& ray) {
  return {ray.direction, ray.origin.cross(ray.direction)};
}

std::optional<Vec2> project_point(const Mat34& P, const Vec3& x) {
  const Vec3 h = P.leftCols<3>() * x + P.col(3);
  if (!(h.z() > kDepthEpsilon)) return std::nullopt;
  return Vec2(h.x() / h.z(), h.y() / h.z());
}

}  // namespace splatct
