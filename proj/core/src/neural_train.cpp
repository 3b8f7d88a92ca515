#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "splatct/error.hpp"
#include "splatct/neural.hpp"
#include "splatct/optim.hpp"
#include "splatct/recon.hpp"

namespace splatct {

void ToyTrainConfig::validate() const {
  require(steps >= 1, "steps must be >= 1");
  require(!view_counts.empty(), "view_counts must not be empty");
  for (int c : view_counts) require(c >= 1, "view counts must be >= 1");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0,
          "final_lr_fraction must lie in (0, 1]");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight decay must be >= 0");
  require(subvolume_factor >= 1, "subvolume factor must be >= 1");
  require(volume_weight >= 0.0 && render_weight >= 0.0, "loss weights must be >= 0");
  render_loss.validate();
}

std::vector<int> evenly_spaced_views(int available, int count, int offset) {
  require(count >= 1 && count <= available, "view count must lie in [1, available]");
  std::vector<int> out(count);
  for (int k = 0; k < count; ++k)
    out[k] = (offset + static_cast<int>(static_cast<long long>(k) * available / count)) % available;
  return out;
}

ToyTrainResult train_toy(ToyModel model, const std::vector<ToySample>& dataset,
                         const ToyTrainConfig& cfg) {
  cfg.validate();
  model.validate();
  require(!dataset.empty(), "training needs at least one sample");
  for (const auto& s : dataset) {
    require(s.volume.dims == s.projections.geometry.volume_dims, "sample volume does not match its geometry");
    for (int c : cfg.view_counts)
      require(c <= static_cast<int>(s.projections.views.size()), "sample has too few views");
  }

  std::map<std::string, AdamState> adam;
  for (const auto& [name, t] : model.weights) adam.emplace(name, AdamState(t.size()));
  std::mt19937_64 rng(cfg.seed);
  ToyTrainResult result;

  for (int step = 1; step <= cfg.steps; ++step) {
    const ToySample& sample =
        dataset[std::uniform_int_distribution<std::size_t>(0, dataset.size() - 1)(rng)];
    const int available = static_cast<int>(sample.projections.views.size());
    const int count =
        cfg.view_counts[std::uniform_int_distribution<std::size_t>(0, cfg.view_counts.size() - 1)(rng)];
    const int offset = std::uniform_int_distribution<int>(0, available - 1)(rng);
    const std::vector<int> chosen = evenly_spaced_views(available, count, offset);
    const ProjectionSet input = sample.projections.subset(chosen);

    const NeuralForward fwd = forward(model, input);
    const VoxGSCloud& cloud = fwd.cloud;
    GradientBuffer grad(cloud.size());
    double loss = 0.0;

    if (cfg.volume_weight > 0.0) {
      const SubVolumeSample target = sample_subvolume(sample.volume, cfg.subvolume_factor, rng());
      const GridDims& sd = target.dims;
      const GridDims& dims = sample.volume.dims;
      for (int z = 0; z < sd.nz; ++z)
        for (int y = 0; y < sd.ny; ++y)
          for (int x = 0; x < sd.nx; ++x) {
            const std::size_t i = dims.index(target.origin[0] + x, target.origin[1] + y, target.origin[2] + z);
            const double d = cloud.amplitude(i) - target.data[sd.index(x, y, z)];
            loss += cfg.volume_weight * d * d;
            if (cloud.alpha[i] > 0.0) grad.d_alpha[i] += cfg.volume_weight * 2.0 * d;
          }
    }
    if (cfg.render_weight > 0.0) {
      const ScannerGeometry& geom = input.geometry;
      const std::vector<ViewPose> poses = input.poses();
      double data_range = 0.0;
      for (const auto& v : input.views)
        for (double p : v.data) data_range = std::max(data_range, p);
      if (!(data_range > 0.0)) data_range = 1.0;
      const double w = cfg.render_weight / count;
      for (int k = 0; k < count; ++k) {
        const Projection rendered = splat_project(cloud, geom, poses[k]);
        LossResult lr = render_loss({geom.detector_nu, geom.detector_nv, rendered.data},
                                    {geom.detector_nu, geom.detector_nv, input.views[k].data},
                                    cfg.render_loss, data_range);
        loss += w * lr.value;
        for (double& g : lr.grad) g *= w;
        splat_project_backward_accumulate(cloud, geom, poses[k], lr.grad, grad);
      }
    }
    if (!std::isfinite(loss))
      throw NumericalError("toy training diverged at step " + std::to_string(step));
    result.loss_trace.push_back(loss);

    const nn::TensorTable grads = backward(model, fwd, grad);
    const double lr = cosine_lr(cfg.learning_rate, cfg.final_lr_fraction, step, cfg.steps);
    for (auto& [name, t] : model.weights) {
      if (cfg.weight_decay > 0.0 && t.shape.size() == 2)
        for (double& v : t.data) v -= lr * cfg.weight_decay * v;
      adam.at(name).update(t.data, grads.at(name).data, lr, step, cfg.beta1, cfg.beta2);
    }
  }
  result.model = std::move(model);
  return result;
}

double mean_psnr(const ToyModel& model, const std::vector<ToySample>& dataset) {
  require(!dataset.empty(), "dataset must not be empty");
  double total = 0.0;
  for (const auto& s : dataset) {
    const VoxelVolume recon = extract_volume(infer(model, s.projections));
    total += std::min(psnr_3d(recon, s.volume, 1.0), kPsnrCapDb);
  }
  return total / static_cast<double>(dataset.size());
}

std::vector<ToySample> make_toy_dataset(int count, const GridDims& dims, const Vec3& extent,
                                        int n_views, int detector, std::uint64_t seed) {
  require(count >= 1, "dataset size must be >= 1");
  std::vector<ToySample> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  const ScannerGeometry geom = ScannerGeometry::for_volume(
      dims, extent, detector, detector, uniform_angles(n_views, 2.0 * std::numbers::pi));
  const std::vector<ViewPose> poses = trajectory_poses(geom);
  const double step = default_march_step(geom);
  for (int s = 0; s < count; ++s) {
    ToySample sample;
    sample.volume = random_ellipsoid_phantom(dims, extent, rng());
    sample.projections.geometry = geom;
    for (int k = 0; k < n_views; ++k) {
      Projection p = raymarch_project(sample.volume, geom, poses[k], step);
      p.pose_index = k;
      p.angle = geom.angles[k];
      sample.projections.views.push_back(std::move(p));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace splatct
