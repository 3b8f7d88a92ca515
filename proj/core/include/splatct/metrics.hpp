#pragma once

#include <span>
#include <vector>

#include "splatct/volume.hpp"

namespace splatct {

struct LossWeights {
  double lambda_l1 = 0.8;
  double lambda_ssim = 0.2;

  void validate() const;
};

// A scalar objective and its gradient with respect to the first argument.
struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

// Row-major image, x fastest.
struct ImageRef {
  int width = 0;
  int height = 0;
  std::span<const double> pixels;
};

// Gaussian window parameters of the structural similarity index.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// Sum of squared differences; gradient 2 (V - V_gt).
LossResult mse_volume(std::span<const double> v, std::span<const double> v_gt);
LossResult mse_volume(const VoxelVolume& v, const VoxelVolume& v_gt);

// Mean absolute difference.
LossResult l1_image(const ImageRef& image, const ImageRef& target);

// Mean SSIM over all valid window positions.
double ssim_image(const ImageRef& a, const ImageRef& b, double data_range = 1.0);
LossResult ssim_image_with_grad(const ImageRef& a, const ImageRef& b,
                                double data_range = 1.0);

// (1 - SSIM) / 2.
LossResult dssim_image(const ImageRef& image, const ImageRef& target,
                       double data_range = 1.0);

// lambda_l1 * L1 + lambda_ssim * D-SSIM.
LossResult render_loss(const ImageRef& image, const ImageRef& target,
                       const LossWeights& weights, double data_range = 1.0);

// 10 log10(range^2 / MSE) over the whole volume; +inf for identical inputs.
double psnr_3d(const VoxelVolume& v, const VoxelVolume& v_gt, double data_range = 1.0);

enum class SliceAxis { kX, kY, kZ };

// Mean 2D SSIM over the slices perpendicular to `axis` (axial by default).
double ssim_slices(const VoxelVolume& v, const VoxelVolume& v_gt,
                   SliceAxis axis = SliceAxis::kZ, double data_range = 1.0);

}  // namespace splatct
