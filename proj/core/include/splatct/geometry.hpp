#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <vector>

namespace splatct {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

// Voxel counts along x, y, z. Storage order everywhere is x fastest.
struct GridDims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

// Circular cone-beam scanner. The orbit lies in the z = 0 plane around the
// +z axis; the detector v axis is aligned with +z. Distances are in mm and
// angles in radians.
struct ScannerGeometry {
  double dso = 0.0;  // source to isocenter
  double dsd = 0.0;  // source to detector
  int detector_nu = 0;
  int detector_nv = 0;
  double detector_du = 0.0;
  double detector_dv = 0.0;
  GridDims volume_dims;
  Vec3 volume_extent = Vec3::Zero();
  std::vector<double> angles;

  // Throws PreconditionError when an invariant does not hold.
  void validate() const;

  Vec3 voxel_pitch() const {
    return volume_extent.cwiseQuotient(
        Vec3(volume_dims.nx, volume_dims.ny, volume_dims.nz));
  }

  // Builds a geometry whose detector just covers the sphere inscribed in the
  // volume box, with dso = 2 * max extent and dsd = 3 * max extent.
  static ScannerGeometry for_volume(const GridDims& dims, const Vec3& extent,
                                    int nu, int nv,
                                    std::vector<double> angles);
};

struct ViewPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Mat3 intrinsics = Mat3::Identity();

  // World position of the camera center, -R^T t.
  Vec3 source_position() const { return -rotation.transpose() * translation; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

struct PluckerEmbedding {
  Vec3 direction = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
};

// P = K [R | t].
Mat34 projection_matrix(const ViewPose& pose);

// Pose of a source at gantry angle `angle`.
ViewPose pose_at_angle(const ScannerGeometry& geom, double angle);

// Angles k * arc / n_views for k = 0 .. n_views - 1.
std::vector<double> uniform_angles(int n_views, double arc);

std::vector<ViewPose> circular_trajectory(const ScannerGeometry& geom,
                                          int n_views, double arc);

// One pose per entry of geom.angles.
std::vector<ViewPose> trajectory_poses(const ScannerGeometry& geom);

// Ray from the source through the center of detector pixel (u, v), i.e.
// through continuous detector coordinate (u + 0.5, v + 0.5).
Ray pixel_ray(const ViewPose& pose, const ScannerGeometry& geom, int u, int v);

// Ray through an arbitrary continuous detector coordinate.
Ray detector_ray(const ViewPose& pose, double u, double v);

PluckerEmbedding plucker_embedding(const Ray& ray);

// Perspective projection to continuous detector coordinates. Returns nullopt
// when the homogeneous depth is not positive (point at or behind the source).
std::optional<Vec2> project_point(const Mat34& P, const Vec3& x);

}  // namespace splatct
