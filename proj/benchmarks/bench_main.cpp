#include <benchmark/benchmark.h>

#include <numbers>
#include <random>

#include "splatct/metrics.hpp"
#include "splatct/neural.hpp"
#include "splatct/recon.hpp"

using namespace splatct;

namespace {

struct Scene {
  VoxGSCloud cloud;
  ScannerGeometry geom;
  ViewPose pose;
};

Scene phantom_scene(int n, int detector) {
  const GridDims d{n, n, n};
  const Vec3 e(2.0 * n, 2.0 * n, 2.0 * n);
  Scene s;
  s.cloud = voxgs_from_volume(shepp_logan_3d(d, e));
  s.geom = ScannerGeometry::for_volume(d, e, detector, detector, {0.3});
  s.pose = trajectory_poses(s.geom)[0];
  return s;
}

void BM_SplatForward(benchmark::State& state) {
  const Scene s = phantom_scene(static_cast<int>(state.range(0)), 2 * static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(splat_project(s.cloud, s.geom, s.pose));
  state.SetItemsProcessed(state.iterations() * s.cloud.size());
}
BENCHMARK(BM_SplatForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_SplatBackward(benchmark::State& state) {
  const Scene s = phantom_scene(static_cast<int>(state.range(0)), 2 * static_cast<int>(state.range(0)));
  const std::vector<double> up(static_cast<std::size_t>(s.geom.detector_nu) * s.geom.detector_nv, 1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(splat_project_backward(s.cloud, s.geom, s.pose, up));
  state.SetItemsProcessed(state.iterations() * s.cloud.size());
}
BENCHMARK(BM_SplatBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Raymarch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridDims d{n, n, n};
  const Vec3 e(2.0 * n, 2.0 * n, 2.0 * n);
  const VoxelVolume vol = shepp_logan_3d(d, e);
  const ScannerGeometry g = ScannerGeometry::for_volume(d, e, 2 * n, 2 * n, {0.3});
  const ViewPose pose = trajectory_poses(g)[0];
  const double step = default_march_step(g);
  for (auto _ : state) benchmark::DoNotOptimize(raymarch_project(vol, g, pose, step));
}
BENCHMARK(BM_Raymarch)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DssimLoss(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(n * n), b(n * n);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(dssim_image({n, n, a}, {n, n, b}));
}
BENCHMARK(BM_DssimLoss)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_ToyForward(benchmark::State& state) {
  const GridDims d{16, 16, 16};
  const Vec3 e(32, 32, 32);
  const std::vector<ToySample> data = make_toy_dataset(1, d, e, 4, 32, 1);
  ToyModelConfig c;
  c.detector_nu = c.detector_nv = 32;
  c.reference_pitch = 2.0;
  const ToyModel m = ToyModel::initialize(c, 0);
  for (auto _ : state) benchmark::DoNotOptimize(infer(m, data[0].projections));
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
