#include <algorithm>
#include <cmath>

#include "splatct/error.hpp"
#include "splatct/recon.hpp"

namespace splatct {

void SartConfig::validate() const {
  require(iterations >= 0, "SART iterations must be >= 0");
  require(relaxation > 0.0 && relaxation < 2.0, "SART relaxation must lie in (0, 2)");
}

double projection_residual(const ProjectionSet& projs, const VoxelVolume& vol, double step) {
  const std::vector<ViewPose> poses = projs.poses();
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < projs.views.size(); ++k) {
    const Projection ax = raymarch_project(vol, projs.geometry, poses[k], step);
    for (std::size_t p = 0; p < ax.data.size(); ++p) {
      const double r = projs.views[k].data[p] - ax.data[p];
      num += r * r;
      den += projs.views[k].data[p] * projs.views[k].data[p];
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

SartResult reconstruct_sart(const ProjectionSet& projs, const SartConfig& cfg) {
  require(!projs.views.empty(), "SART needs at least one view");
  projs.validate();
  cfg.validate();
  const ScannerGeometry& geom = projs.geometry;
  const double step = cfg.step > 0.0 ? cfg.step : default_march_step(geom);
  const std::vector<ViewPose> poses = projs.poses();
  const std::size_t n_views = projs.views.size();

  SartResult result;
  result.volume = VoxelVolume(geom.volume_dims, geom.volume_extent);
  VoxelVolume& vol = result.volume;
  if (cfg.iterations == 0) return result;

  // Per-view row sums A_k 1 and column sums A_k^T 1.
  const VoxelVolume ones(geom.volume_dims, geom.volume_extent, 1.0);
  std::vector<std::vector<double>> row_sums(n_views);
  std::vector<VoxelVolume> col_sums(n_views);
  for (std::size_t k = 0; k < n_views; ++k) {
    row_sums[k] = raymarch_project(ones, geom, poses[k], step).data;
    col_sums[k] = VoxelVolume(geom.volume_dims, geom.volume_extent);
    const std::vector<double> unit(row_sums[k].size(), 1.0);
    raymarch_backproject(unit, geom, poses[k], step, col_sums[k]);
  }
  double norm_p = 0.0;
  for (const auto& view : projs.views)
    for (double p : view.data) norm_p += p * p;
  norm_p = std::sqrt(norm_p);

  constexpr double kTiny = 1e-12;
  for (int sweep = 0; sweep < cfg.iterations; ++sweep) {
    double sweep_residual = 0.0;
    for (std::size_t k = 0; k < n_views; ++k) {
      const Projection ax = raymarch_project(vol, geom, poses[k], step);
      std::vector<double> weighted(ax.data.size(), 0.0);
      for (std::size_t p = 0; p < ax.data.size(); ++p) {
        const double r = projs.views[k].data[p] - ax.data[p];
        sweep_residual += r * r;
        if (row_sums[k][p] > kTiny) weighted[p] = r / row_sums[k][p];
      }
      VoxelVolume back(geom.volume_dims, geom.volume_extent);
      raymarch_backproject(weighted, geom, poses[k], step, back);
      for (std::size_t i = 0; i < vol.data.size(); ++i)
        if (col_sums[k].data[i] > kTiny)
          vol.data[i] += cfg.relaxation * back.data[i] / col_sums[k].data[i];
    }
    for (double& v : vol.data) {
      if (!std::isfinite(v)) throw NumericalError("SART produced a non-finite voxel");
      v = std::max(v, 0.0);
    }
    result.residual_trace.push_back(norm_p > 0.0 ? std::sqrt(sweep_residual) / norm_p
                                                 : std::sqrt(sweep_residual));
  }
  return result;
}

}  // namespace splatct
