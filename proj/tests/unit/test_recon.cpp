#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "splatct/error.hpp"
#include "splatct/recon.hpp"
#include "support.hpp"

using namespace splatct;

namespace {

ProjectionSet marched(const VoxelVolume& vol, int views, int detector) {
  ProjectionSet s;
  s.geometry = ScannerGeometry::for_volume(vol.dims, vol.extent, detector, detector,
                                           uniform_angles(views, 2 * std::numbers::pi));
  const double step = default_march_step(s.geometry);
  const auto poses = trajectory_poses(s.geometry);
  for (int k = 0; k < views; ++k) {
    Projection p = raymarch_project(vol, s.geometry, poses[k], step);
    p.pose_index = k;
    p.angle = s.geometry.angles[k];
    s.views.push_back(std::move(p));
  }
  return s;
}

}  // namespace

TEST_CASE("optimizing opacities recovers a single Gaussian") {
  const GridDims d{4, 4, 4};
  const Vec3 e(8, 8, 8);
  VoxGSCloud truth = voxgs_from_volume(VoxelVolume(d, e));
  const std::size_t center = d.index(2, 1, 2);
  truth.alpha[center] = 0.7;
  ProjectionSet projs;
  projs.geometry = ScannerGeometry::for_volume(d, e, 16, 16, uniform_angles(6, 2 * std::numbers::pi));
  const auto poses = trajectory_poses(projs.geometry);
  for (int k = 0; k < 6; ++k) {
    Projection p = splat_project(truth, projs.geometry, poses[k]);
    p.pose_index = k;
    p.angle = projs.geometry.angles[k];
    projs.views.push_back(std::move(p));
  }
  OptimConfig cfg;
  cfg.iterations = 600;
  cfg.alpha_only = true;
  cfg.learning_rates.alpha = 0.02;
  cfg.final_lr_fraction = 0.01;
  cfg.views_per_step = 6;
  const OptimResult r = reconstruct_voxgs_opt(projs, cfg);
  CHECK(r.cloud.alpha[center] == doctest::Approx(0.7).epsilon(0.01));
  for (std::size_t i = 0; i < r.cloud.size(); ++i)
    if (i != center) CHECK(r.cloud.amplitude(i) < 0.007);
}

TEST_CASE("optimization preconditions and determinism") {
  const VoxelVolume vol = shepp_logan_3d({8, 8, 8}, Vec3(16, 16, 16));
  const ProjectionSet projs = marched(vol, 4, 16);
  OptimConfig cfg;
  cfg.iterations = 15;
  cfg.seed = 3;
  const std::vector<int> first{0};
  CHECK_THROWS_AS(reconstruct_voxgs_opt(projs.subset(first), cfg), PreconditionError);
  cfg.views_per_step = 5;
  CHECK_THROWS_AS(reconstruct_voxgs_opt(projs, cfg), PreconditionError);
  cfg.views_per_step = 2;
  cfg.learning_rates.rot = 0.0;
  CHECK_THROWS_AS(reconstruct_voxgs_opt(projs, cfg), PreconditionError);
  cfg.learning_rates.rot = 1e-3;
  const OptimResult a = reconstruct_voxgs_opt(projs, cfg);
  const OptimResult b = reconstruct_voxgs_opt(projs, cfg);
  CHECK(a.cloud.alpha == b.cloud.alpha);
  CHECK(a.cloud.scale_param == b.cloud.scale_param);
  CHECK(a.cloud.rot_param == b.cloud.rot_param);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.loss_trace.size() == 15);
  const VoxelVolume v = extract_volume(a.cloud);
  for (double x : v.data) CHECK((std::isfinite(x) && x >= 0.0));
}

TEST_CASE("volume supervision lowers the sub-volume error") {
  const VoxelVolume vol = shepp_logan_3d({8, 8, 8}, Vec3(16, 16, 16));
  const ProjectionSet projs = marched(vol, 4, 16);
  OptimConfig cfg;
  cfg.iterations = 60;
  cfg.subvolume_factor = 2;
  const OptimResult with = reconstruct_voxgs_opt(projs, cfg, &vol);
  CHECK(with.loss_trace.back() < with.loss_trace.front());
  CHECK_THROWS_AS(reconstruct_voxgs_opt(projs, cfg, &static_cast<const VoxelVolume&>(VoxelVolume({4, 4, 4}, Vec3(16, 16, 16)))),
                  PreconditionError);
}

TEST_CASE("SART converges on a consistent system") {
  std::mt19937_64 rng(1);
  VoxelVolume vol({8, 8, 8}, Vec3(8, 8, 8));
  vol.data = test::random_values(vol.data.size(), rng, 0, 1);
  const ProjectionSet projs = marched(vol, 20, 16);
  SartConfig cfg;
  const double step = default_march_step(projs.geometry);
  const double initial = projection_residual(projs, VoxelVolume(vol.dims, vol.extent), step);
  const SartResult r = reconstruct_sart(projs, cfg);
  CHECK(r.residual_trace.size() == 50);
  CHECK(projection_residual(projs, r.volume, step) < 0.01 * initial);
}

TEST_CASE("SART fixed points and configuration") {
  const VoxelVolume zero({8, 8, 8}, Vec3(8, 8, 8));
  const ProjectionSet projs = marched(zero, 4, 12);
  const SartResult r = reconstruct_sart(projs, {});
  for (double v : r.volume.data) CHECK(v == 0.0);
  SartConfig none;
  none.iterations = 0;
  const VoxelVolume vol = shepp_logan_3d({8, 8, 8}, Vec3(8, 8, 8));
  const SartResult z = reconstruct_sart(marched(vol, 4, 12), none);
  for (double v : z.volume.data) CHECK(v == 0.0);
  SartConfig bad;
  bad.relaxation = 2.0;
  CHECK_THROWS_AS(reconstruct_sart(projs, bad), PreconditionError);
}

TEST_CASE("SART system adjoint holds for random pairs") {
  std::mt19937_64 rng(2);
  const GridDims d{8, 8, 8};
  const Vec3 e(8, 8, 8);
  const ScannerGeometry g = ScannerGeometry::for_volume(d, e, 12, 12, uniform_angles(20, 2 * std::numbers::pi));
  const auto poses = trajectory_poses(g);
  const double step = default_march_step(g);
  for (int k = 0; k < 20; ++k) {
    VoxelVolume v(d, e);
    v.data = test::random_values(d.count(), rng, -1, 1);
    const std::vector<double> p = test::random_values(144, rng, -1, 1);
    const Projection av = raymarch_project(v, g, poses[k], step);
    VoxelVolume atp(d, e);
    raymarch_backproject(p, g, poses[k], step, atp);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) lhs += av.data[i] * p[i];
    for (std::size_t i = 0; i < v.data.size(); ++i) rhs += v.data[i] * atp.data[i];
    CHECK(test::close(lhs, rhs, 1e-6));
  }
}
