#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "doctest.h"
#include "splatct/error.hpp"
#include "splatct/voxgs.hpp"
#include "support.hpp"

using namespace splatct;

namespace {

Vec4 random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Vec4(n(rng), n(rng), n(rng), n(rng));
}

}  // namespace

TEST_CASE("centroid positions") {
  const Vec3 p = centroid_position({2, 2, 2}, Vec3(2, 2, 2), 0, 0, 0);
  CHECK((p - Vec3(-0.5, -0.5, -0.5)).norm() == 0.0);
  CHECK(centroid_position({5, 7, 3}, Vec3(5, 9, 4), 2, 3, 1).norm() == 0.0);
  const GridDims d{6, 6, 6};
  for (int i = 1; i < 6; ++i) {
    CHECK(centroid_position(d, Vec3(6, 6, 6), i, 0, 0).x() > centroid_position(d, Vec3(6, 6, 6), i - 1, 0, 0).x());
    CHECK(centroid_position(d, Vec3(6, 6, 6), 0, i, 0).y() > centroid_position(d, Vec3(6, 6, 6), 0, i - 1, 0).y());
    CHECK(centroid_position(d, Vec3(6, 6, 6), 0, 0, i).z() > centroid_position(d, Vec3(6, 6, 6), 0, 0, i - 1).z());
  }
  CHECK_THROWS_AS(centroid_position(d, Vec3(6, 6, 6), 6, 0, 0), PreconditionError);
  const VoxGSCloud cloud(d, Vec3(6, 6, 6));
  CHECK((cloud.centroid(d.index(1, 2, 3)) - centroid_position(d, Vec3(6, 6, 6), 1, 2, 3)).norm() == 0.0);
}

TEST_CASE("covariance examples") {
  const Covariance c = covariance_from(Vec3(1, 1, 1), Vec4(1, 0, 0, 0));
  CHECK((c.sigma - Mat3::Identity()).norm() < 1e-15);
  std::mt19937_64 rng(1);
  const Covariance iso = covariance_from(Vec3(0.7, 0.7, 0.7), random_quat(rng));
  CHECK((iso.sigma - 0.49 * Mat3::Identity()).norm() < 1e-12);
  CHECK_THROWS_AS(covariance_from(Vec3(1, 1, 1), Vec4(1e-9, 0, 0, 0)), PreconditionError);
  CHECK_THROWS_AS(covariance_from(Vec3(1, 0, 1), Vec4(1, 0, 0, 0)), PreconditionError);
}

TEST_CASE("covariance validity and quaternion sign invariance") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> s(0.1, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 sc(s(rng), s(rng), s(rng));
    const Vec4 q = random_quat(rng);
    const Covariance c = covariance_from(sc, q);
    CHECK((c.sigma - c.sigma.transpose()).norm() < 1e-12);
    CHECK((c.precision * c.sigma - Mat3::Identity()).norm() < 1e-9);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat3>(c.sigma).eigenvalues().minCoeff() > 0.0);
    const Covariance m = covariance_from(sc, -q);
    CHECK((m.sigma - c.sigma).norm() < 1e-12);
  }
}

TEST_CASE("voxgs_from_volume and extract_volume round trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  VoxelVolume v({5, 4, 3}, Vec3(5, 4, 3));
  for (double& x : v.data) x = u(rng);
  const VoxGSCloud cloud = voxgs_from_volume(v, 1.0);
  ExtractStats stats;
  const VoxelVolume back = extract_volume(cloud, &stats);
  CHECK(back.data == v.data);
  CHECK(back.dims == v.dims);
  CHECK(back.extent == v.extent);
  CHECK(stats.opacity_reads == v.data.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((cloud.scale(i) - Vec3::Ones()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(cloud.quaternion(i) == Vec4(1, 0, 0, 0));
  }
  const VoxGSCloud zero = voxgs_from_volume(VoxelVolume({3, 3, 3}, Vec3(3, 3, 3)));
  for (double a : zero.alpha) CHECK(a == 0.0);
}

TEST_CASE("extraction clamps negative opacities") {
  VoxGSCloud c({2, 2, 2}, Vec3(2, 2, 2));
  c.alpha.assign(8, 0.25);
  c.alpha[3] = -0.3;
  const VoxelVolume v = extract_volume(c);
  CHECK(v.data[3] == 0.0);
  CHECK(v.data[2] == 0.25);
}

TEST_CASE("extraction work is linear in the voxel count") {
  for (int n : {4, 8, 16}) {
    VoxGSCloud c({n, n, n}, Vec3(n, n, n));
    ExtractStats s;
    extract_volume(c, &s);
    CHECK(s.opacity_reads == static_cast<std::size_t>(n) * n * n);
  }
}

TEST_CASE("default scale and activation") {
  const GridDims d{8, 8, 8};
  const Vec3 e(16, 16, 16);
  CHECK(default_scale_for(d, e) == doctest::Approx(2.0 * kDefaultScaleFraction));
  const VoxGSCloud c = voxgs_from_volume(VoxelVolume(d, e));
  CHECK(c.min_scale() == doctest::Approx(0.2));
  CHECK(c.scale(0)[0] == doctest::Approx(2.0 * kDefaultScaleFraction).epsilon(1e-9));
  CHECK(softplus_inverse(softplus(0.3)) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(std::isfinite(softplus(800.0)));
}

TEST_CASE("gaussian_density_at") {
  GaussianView g;
  g.mu = Vec3(1, 2, 3);
  g.amplitude = 0.7;
  CHECK(gaussian_density_at(g, g.mu) == 0.7);
  g.amplitude = 1.0;
  CHECK(gaussian_density_at(g, g.mu + Vec3(0, 1, 0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> s(0.3, 2.0), u(-2, 2);
  for (int i = 0; i < 50; ++i) {
    const Covariance c = covariance_from(Vec3(s(rng), s(rng), s(rng)), random_quat(rng));
    g.precision = c.precision;
    const Vec3 x = g.mu + Vec3(u(rng), u(rng), u(rng));
    // Oracle: Mahalanobis distance in the eigenbasis of the covariance.
    Eigen::SelfAdjointEigenSolver<Mat3> es(c.sigma);
    const Vec3 local = es.eigenvectors().transpose() * (x - g.mu);
    double m2 = 0.0;
    for (int a = 0; a < 3; ++a) m2 += local[a] * local[a] / es.eigenvalues()[a];
    CHECK(gaussian_density_at(g, x) == doctest::Approx(std::exp(-0.5 * m2)).epsilon(1e-10));
  }
}

TEST_CASE("precision_backward matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.3, 2.0), u(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 sc(s(rng), s(rng), s(rng));
    Vec4 q = random_quat(rng);
    Mat3 w;
    for (int i = 0; i < 9; ++i) w(i / 3, i % 3) = u(rng);
    w = 0.5 * (w + w.transpose()).eval();
    auto loss = [&] { return (covariance_from(sc, q).precision.cwiseProduct(w)).sum(); };
    Vec3 ds;
    Vec4 dq;
    precision_backward(sc, q, w, ds, dq);
    for (int a = 0; a < 3; ++a) CHECK(test::close(ds[a], test::central_diff(loss, sc[a], 1e-6), 1e-6, 1e-9));
    for (int a = 0; a < 4; ++a) CHECK(test::close(dq[a], test::central_diff(loss, q[a], 1e-6), 1e-6, 1e-9));
  }
}
