#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "splatct/error.hpp"
#include "splatct/geometry.hpp"
#include "support.hpp"

using namespace splatct;

namespace {

ScannerGeometry small_geometry(std::vector<double> angles = {0.0}) {
  return ScannerGeometry::for_volume({16, 16, 16}, Vec3(32, 32, 32), 24, 20, std::move(angles));
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

}  // namespace

TEST_CASE("projection_matrix of the identity pose") {
  ViewPose pose;
  const Mat34 P = projection_matrix(pose);
  Mat34 expected = Mat34::Zero();
  expected.leftCols<3>() = Mat3::Identity();
  CHECK(P == expected);
}

TEST_CASE("isocenter projects to the principal point") {
  const ScannerGeometry g = small_geometry(uniform_angles(7, 2 * std::numbers::pi));
  for (const ViewPose& pose : trajectory_poses(g)) {
    const auto uv = project_point(projection_matrix(pose), Vec3::Zero());
    REQUIRE(uv);
    CHECK((*uv)[0] == doctest::Approx(12.0).epsilon(1e-12));
    CHECK((*uv)[1] == doctest::Approx(10.0).epsilon(1e-12));
  }
}

TEST_CASE("projection matrix agrees with K(Rx + t) composed by hand") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 axis = random_unit(rng);
    ViewPose pose;
    pose.rotation = Eigen::AngleAxisd(3.0 * u(rng), axis).toRotationMatrix();
    pose.translation = Vec3(u(rng), u(rng), 10.0 + u(rng));
    pose.intrinsics << 50 + u(rng), 0, 8, 0, 60 + u(rng), 9, 0, 0, 1;
    const Vec3 x(u(rng), u(rng), u(rng));
    const Vec3 cam = pose.intrinsics * (pose.rotation * x + pose.translation);
    const auto uv = project_point(projection_matrix(pose), x);
    REQUIRE(uv);
    CHECK((*uv)[0] == doctest::Approx(cam[0] / cam[2]).epsilon(1e-12));
    CHECK((*uv)[1] == doctest::Approx(cam[1] / cam[2]).epsilon(1e-12));
  }
}

TEST_CASE("project_point examples") {
  Mat34 P = Mat34::Zero();
  P.leftCols<3>() = Mat3::Identity();
  auto a = project_point(P, Vec3(0, 0, 2));
  REQUIRE(a);
  CHECK((*a - Vec2(0, 0)).norm() == 0.0);
  auto b = project_point(P, Vec3(2, 4, 2));
  REQUIRE(b);
  CHECK((*b - Vec2(1, 2)).norm() == 0.0);
  CHECK_FALSE(project_point(P, Vec3(0, 0, -1)).has_value());
  CHECK_FALSE(project_point(P, Vec3(1, 1, 0)).has_value());
}

TEST_CASE("circular trajectory angles and poses") {
  const ScannerGeometry g = small_geometry();
  const auto angles = uniform_angles(10, 2 * std::numbers::pi);
  REQUIRE(angles.size() == 10);
  for (int k = 0; k < 10; ++k) CHECK(angles[k] * 180.0 / std::numbers::pi == doctest::Approx(36.0 * k));
  const auto one = circular_trajectory(g, 1, 2 * std::numbers::pi);
  REQUIRE(one.size() == 1);
  CHECK((one[0].source_position() - Vec3(g.dso, 0, 0)).norm() < 1e-12);
  CHECK_THROWS_AS(uniform_angles(0, 1.0), PreconditionError);
  CHECK_THROWS_AS(uniform_angles(3, 0.0), PreconditionError);
  CHECK_THROWS_AS(uniform_angles(3, 7.0), PreconditionError);

  // Square of sources, each rotated 90 degrees about +z from the previous.
  const auto four = circular_trajectory(g, 4, 2 * std::numbers::pi);
  const Mat3 quarter = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  for (int k = 0; k < 4; ++k) {
    const double a = k * std::numbers::pi / 2;
    const Vec3 expected(g.dso * std::cos(a), g.dso * std::sin(a), 0.0);
    CHECK((four[k].source_position() - expected).norm() < 1e-9);
    const ViewPose& next = four[(k + 1) % 4];
    CHECK((next.rotation - four[k].rotation * quarter.transpose()).norm() < 1e-9);
  }
}

TEST_CASE("generated poses are orthonormal, antipodal in pairs, and face the isocenter") {
  const ScannerGeometry g = small_geometry(uniform_angles(12, 2 * std::numbers::pi));
  const auto poses = trajectory_poses(g);
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Mat3& R = poses[k].rotation;
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-9);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(poses[k].source_position().norm() == doctest::Approx(g.dso));
    CHECK((poses[k].source_position() + poses[(k + 6) % 12].source_position()).norm() < 1e-6);
  }
}

TEST_CASE("pixel rays round-trip through project_point") {
  const ScannerGeometry g = small_geometry(uniform_angles(5, 2 * std::numbers::pi));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pu(0, g.detector_nu - 1), pv(0, g.detector_nv - 1);
  std::uniform_real_distribution<double> t(0.1, 2.0);
  for (const ViewPose& pose : trajectory_poses(g)) {
    const Mat34 P = projection_matrix(pose);
    for (int i = 0; i < 100; ++i) {
      const int u = pu(rng), v = pv(rng);
      const Ray r = pixel_ray(pose, g, u, v);
      CHECK(r.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
      const auto uv = project_point(P, r.origin + t(rng) * g.dso * r.direction);
      REQUIRE(uv);
      CHECK(std::abs((*uv)[0] - (u + 0.5)) < 1e-6);
      CHECK(std::abs((*uv)[1] - (v + 0.5)) < 1e-6);
    }
  }
}

TEST_CASE("central pixel ray passes through the isocenter") {
  ScannerGeometry g = ScannerGeometry::for_volume({8, 8, 8}, Vec3(8, 8, 8), 9, 9, {0.7});
  const ViewPose pose = trajectory_poses(g)[0];
  const Ray r = pixel_ray(pose, g, 4, 4);
  const Vec3 closest = r.origin - r.origin.dot(r.direction) * r.direction;
  CHECK(closest.norm() < 1e-9);
  const Ray other = pixel_ray(pose, g, 0, 4);
  CHECK(r.direction.cross(other.direction).norm() > 1e-3);
  CHECK_THROWS_AS(pixel_ray(pose, g, 9, 0), PreconditionError);
  CHECK_THROWS_AS(pixel_ray(pose, g, 0, -1), PreconditionError);
}

TEST_CASE("plucker embedding examples and invariance") {
  Ray r{Vec3(1, 0, 0), Vec3(0, 1, 0)};
  PluckerEmbedding p = plucker_embedding(r);
  CHECK(p.direction == Vec3(0, 1, 0));
  CHECK(p.moment == Vec3(0, 0, 1));
  PluckerEmbedding q = plucker_embedding({Vec3(1, 1, 0), Vec3(0, 1, 0)});
  CHECK(q.moment == p.moment);
  CHECK(q.direction == p.direction);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 1000; ++i) {
    const Ray a{Vec3(u(rng), u(rng), u(rng)), random_unit(rng)};
    const double lambda = u(rng);
    const PluckerEmbedding pa = plucker_embedding(a);
    const PluckerEmbedding pb = plucker_embedding({a.origin + lambda * a.direction, a.direction});
    CHECK(std::abs(pa.moment.dot(pa.direction)) < 1e-9);
    CHECK((pa.moment - pb.moment).norm() < 1e-9);
  }
}

TEST_CASE("geometry validation") {
  ScannerGeometry g = small_geometry();
  CHECK_NOTHROW(g.validate());
  ScannerGeometry bad = g;
  bad.dsd = bad.dso;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = g;
  bad.detector_du = 0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = g;
  bad.volume_extent *= 10;  // voxels beyond the source orbit
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = g;
  bad.detector_nv = 0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("default geometry covers the inscribed sphere") {
  const ScannerGeometry g = ScannerGeometry::for_volume({32, 32, 32}, Vec3(64, 64, 64), 64, 64, {0.0});
  CHECK(g.dso == 128.0);
  CHECK(g.dsd == 192.0);
  const double r = 32.0;
  const double half = g.dsd * r / std::sqrt(g.dso * g.dso - r * r);
  CHECK(g.detector_du * 32 == doctest::Approx(half));
}
