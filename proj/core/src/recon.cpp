#include "splatct/recon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "splatct/error.hpp"
#include "splatct/optim.hpp"

namespace splatct {

void OptimConfig::validate(int available_views) const {
  require(iterations >= 1, "iterations must be >= 1");
  require(learning_rates.alpha > 0.0 && learning_rates.scale > 0.0 && learning_rates.rot > 0.0,
          "learning rates must be positive");
  require(views_per_step >= 1 && views_per_step <= available_views,
          "views_per_step must be between 1 and the number of views");
  require(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0,
          "final_lr_fraction must lie in (0, 1]");
  loss_weights.validate();
}

double default_march_step(const ScannerGeometry& geom) {
  return 0.25 * geom.voxel_pitch().minCoeff();
}

OptimResult reconstruct_voxgs_opt(const ProjectionSet& projs, const OptimConfig& cfg,
                                  const VoxelVolume* volume_target) {
  require(projs.views.size() >= 2, "VoxGS optimization needs at least 2 views");
  projs.validate();
  cfg.validate(static_cast<int>(projs.views.size()));
  const ScannerGeometry& geom = projs.geometry;
  if (volume_target)
    require(volume_target->dims == geom.volume_dims, "volume target dims do not match geometry");

  OptimResult result;
  result.cloud = voxgs_from_volume(VoxelVolume(geom.volume_dims, geom.volume_extent));
  VoxGSCloud& cloud = result.cloud;
  const std::vector<ViewPose> poses = projs.poses();

  double data_range = 0.0;
  for (const auto& view : projs.views)
    for (double p : view.data) data_range = std::max(data_range, p);
  if (!(data_range > 0.0)) data_range = 1.0;

  AdamState adam_alpha(cloud.alpha.size());
  AdamState adam_scale(cloud.scale_param.size());
  AdamState adam_rot(cloud.rot_param.size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(projs.views.size());
  std::iota(order.begin(), order.end(), 0);

  SplatOptions splat = cfg.splat;
  splat.deterministic = cfg.deterministic;
  const int nu = geom.detector_nu;
  const int nv = geom.detector_nv;

  // Views are visited in shuffled passes so each one is seen equally often.
  const int n_views = static_cast<int>(order.size());
  int cursor = n_views;
  for (int it = 1; it <= cfg.iterations; ++it) {
    if (cursor + cfg.views_per_step > n_views) {
      for (int k = n_views - 1; k > 0; --k) {
        std::uniform_int_distribution<int> pick(0, k);
        std::swap(order[k], order[pick(rng)]);
      }
      cursor = 0;
    }
    GradientBuffer grad(cloud.size());
    double loss = 0.0;
    const double view_weight = 1.0 / cfg.views_per_step;
    for (int k = 0; k < cfg.views_per_step; ++k) {
      const int view = order[cursor + k];
      const Projection rendered = splat_project(cloud, geom, poses[view], splat);
      LossResult lr = render_loss({nu, nv, rendered.data}, {nu, nv, projs.views[view].data},
                                  cfg.loss_weights, data_range);
      loss += view_weight * lr.value;
      for (double& g : lr.grad) g *= view_weight;
      splat_project_backward_accumulate(cloud, geom, poses[view], lr.grad, grad, splat);
    }
    if (volume_target) {
      const std::uint64_t sub_seed = rng();
      const SubVolumeSample target = sample_subvolume(*volume_target, cfg.subvolume_factor, sub_seed);
      const GridDims& sd = target.dims;
      for (int z = 0; z < sd.nz; ++z)
        for (int y = 0; y < sd.ny; ++y)
          for (int x = 0; x < sd.nx; ++x) {
            const std::size_t i =
                geom.volume_dims.index(target.origin[0] + x, target.origin[1] + y, target.origin[2] + z);
            const double d = cloud.amplitude(i) - target.data[sd.index(x, y, z)];
            loss += cfg.volume_weight * d * d;
            if (cloud.alpha[i] >= 0.0) grad.d_alpha[i] += cfg.volume_weight * 2.0 * d;
          }
    }
    cursor += cfg.views_per_step;
    if (!std::isfinite(loss))
      throw NumericalError("VoxGS optimization diverged at iteration " + std::to_string(it));
    result.loss_trace.push_back(loss);

    const double frac = cfg.final_lr_fraction;
    adam_alpha.update(cloud.alpha, grad.d_alpha,
                      cosine_lr(cfg.learning_rates.alpha, frac, it, cfg.iterations), it,
                      cfg.beta1, cfg.beta2);
    if (!cfg.alpha_only) {
      adam_scale.update(cloud.scale_param, grad.d_scale_param,
                        cosine_lr(cfg.learning_rates.scale, frac, it, cfg.iterations), it,
                        cfg.beta1, cfg.beta2);
      adam_rot.update(cloud.rot_param, grad.d_rot_param,
                      cosine_lr(cfg.learning_rates.rot, frac, it, cfg.iterations), it,
                      cfg.beta1, cfg.beta2);
    }
    // Projected step: opacities stay in the region where they receive gradient.
    for (double& a : cloud.alpha) a = std::max(a, 0.0);
  }
  return result;
}

MetricsReport evaluate_recon(const VoxelVolume& recon, const VoxelVolume& gt, double data_range) {
  require(recon.dims == gt.dims, "volume dims do not match");
  MetricsReport r;
  r.mse_sum = mse_volume(recon, gt).value;
  r.mse_mean = r.mse_sum / static_cast<double>(gt.data.size());
  r.psnr_db = std::min(psnr_3d(recon, gt, data_range), kPsnrCapDb);
  r.ssim = ssim_slices(recon, gt, SliceAxis::kZ, data_range);
  return r;
}

}  // namespace splatct
