#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatct/metrics.hpp"
#include "splatct/projector.hpp"
#include "splatct/voxgs.hpp"

namespace splatct {

struct LearningRates {
  double alpha = 3e-2;
  double scale = 3e-3;
  double rot = 1e-3;
};

struct OptimConfig {
  int iterations = 2000;
  LearningRates learning_rates;
  LossWeights loss_weights;
  int views_per_step = 1;
  std::uint64_t seed = 0;
  bool deterministic = true;
  double beta1 = 0.9;
  double beta2 = 0.95;
  // Learning rates decay on a cosine to this fraction of their start value.
  double final_lr_fraction = 0.05;
  SplatOptions splat;
  // Keep scales and rotations at their initial values.
  bool alpha_only = false;
  // Volume supervision (only used when a target volume is passed).
  double volume_weight = 1.0;
  int subvolume_factor = 4;

  void validate(int available_views) const;
};

struct OptimResult {
  VoxGSCloud cloud;
  std::vector<double> loss_trace;
};

// Per-case optimization of a VoxGS cloud against the projections, starting
// from an all-zero volume. When `volume_target` is given, a sum-of-squares
// loss on a random sub-volume is added each step.
OptimResult reconstruct_voxgs_opt(const ProjectionSet& projs, const OptimConfig& cfg,
                                  const VoxelVolume* volume_target = nullptr);

struct SartConfig {
  int iterations = 50;
  double relaxation = 0.5;
  // Ray-march step for the system rows (mm); <= 0 means a quarter voxel.
  double step = 0.0;

  void validate() const;
};

struct SartResult {
  VoxelVolume volume;
  // Relative residual ||p - A v|| / ||p|| accumulated over each sweep.
  std::vector<double> residual_trace;
};

SartResult reconstruct_sart(const ProjectionSet& projs, const SartConfig& cfg);

// Residual ||p - A v|| / ||p|| of a volume against the projections.
double projection_residual(const ProjectionSet& projs, const VoxelVolume& vol, double step);

// Quarter-voxel ray-march step used for simulated projections.
double default_march_step(const ScannerGeometry& geom);

inline constexpr double kPsnrCapDb = 100.0;

struct MetricsReport {
  double psnr_db = 0.0;  // capped at kPsnrCapDb
  double ssim = 0.0;
  double mse_sum = 0.0;
  double mse_mean = 0.0;
};

MetricsReport evaluate_recon(const VoxelVolume& recon, const VoxelVolume& gt,
                             double data_range = 1.0);

}  // namespace splatct
