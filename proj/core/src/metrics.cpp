#include "splatct/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "splatct/error.hpp"

namespace splatct {

namespace {

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int k = 0; k < kSsimWindow; ++k) {
    const double d = k - kSsimWindow / 2;
    w[k] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[k];
  }
  for (double& v : w) v /= sum;
  return w;
}

const std::array<double, kSsimWindow>& window() {
  static const auto w = gaussian_window();
  return w;
}

// Separable "valid" Gaussian filtering; output is (W - 10) x (H - 10).
std::vector<double> filter_valid(const std::vector<double>& img, int width, int height) {
  const auto& w = window();
  const int ow = width - kSsimWindow + 1;
  const int oh = height - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += w[k] * img[static_cast<std::size_t>(y) * width + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += w[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

// Transpose of filter_valid.
std::vector<double> filter_valid_adjoint(const std::vector<double>& map, int width, int height) {
  const auto& w = window();
  const int ow = width - kSsimWindow + 1;
  const int oh = height - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * height, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double g = map[static_cast<std::size_t>(y) * ow + x];
      for (int k = 0; k < kSsimWindow; ++k) rows[static_cast<std::size_t>(y + k) * ow + x] += w[k] * g;
    }
  std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < ow; ++x) {
      const double g = rows[static_cast<std::size_t>(y) * ow + x];
      for (int k = 0; k < kSsimWindow; ++k) out[static_cast<std::size_t>(y) * width + x + k] += w[k] * g;
    }
  return out;
}

void check_pair(const ImageRef& a, const ImageRef& b) {
  require(a.width == b.width && a.height == b.height, "image dims do not match");
  require(a.pixels.size() == static_cast<std::size_t>(a.width) * a.height &&
              b.pixels.size() == a.pixels.size(),
          "image buffer size mismatch");
}

LossResult ssim_impl(const ImageRef& a, const ImageRef& b, double data_range, bool with_grad) {
  check_pair(a, b);
  require(a.width >= kSsimWindow && a.height >= kSsimWindow,
          "image is smaller than the SSIM window");
  require(data_range > 0.0, "data range must be positive");
  const int w = a.width, h = a.height;
  const std::size_t n = a.pixels.size();
  std::vector<double> x(a.pixels.begin(), a.pixels.end());
  std::vector<double> y(b.pixels.begin(), b.pixels.end());
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, w, h);
  const auto my = filter_valid(y, w, h);
  const auto exx = filter_valid(xx, w, h);
  const auto eyy = filter_valid(yy, w, h);
  const auto exy = filter_valid(xy, w, h);

  const double c1 = (kSsimK1 * data_range) * (kSsimK1 * data_range);
  const double c2 = (kSsimK2 * data_range) * (kSsimK2 * data_range);
  const std::size_t m = mx.size();
  std::vector<double> g_mu, g_exx, g_exy;
  if (with_grad) {
    g_mu.resize(m);
    g_exx.resize(m);
    g_exy.resize(m);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < m; ++p) {
    const double a1 = 2.0 * mx[p] * my[p] + c1;
    const double a2 = 2.0 * (exy[p] - mx[p] * my[p]) + c2;
    const double b1 = mx[p] * mx[p] + my[p] * my[p] + c1;
    const double b2 = (exx[p] - mx[p] * mx[p]) + (eyy[p] - my[p] * my[p]) + c2;
    const double den = b1 * b2;
    const double s = a1 * a2 / den;
    total += s;
    if (with_grad) {
      const double d_num = 2.0 * my[p] * a2 - 2.0 * my[p] * a1;
      const double d_den = 2.0 * mx[p] * b2 - 2.0 * mx[p] * b1;
      g_mu[p] = (d_num - s * d_den) / den / m;
      g_exy[p] = 2.0 * a1 / den / m;
      g_exx[p] = -s * b1 / den / m;
    }
  }
  LossResult r;
  r.value = total / m;
  if (with_grad) {
    const auto back_mu = filter_valid_adjoint(g_mu, w, h);
    const auto back_xx = filter_valid_adjoint(g_exx, w, h);
    const auto back_xy = filter_valid_adjoint(g_exy, w, h);
    r.grad.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      r.grad[i] = back_mu[i] + 2.0 * x[i] * back_xx[i] + y[i] * back_xy[i];
  }
  return r;
}

}  // namespace

void LossWeights::validate() const {
  require(lambda_l1 >= 0.0 && lambda_ssim >= 0.0, "loss weights must be non-negative");
  require(lambda_l1 > 0.0 || lambda_ssim > 0.0, "loss weights must not both be zero");
}

LossResult mse_volume(std::span<const double> v, std::span<const double> v_gt) {
  require(v.size() == v_gt.size(), "volume sizes do not match");
  LossResult r;
  r.grad.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - v_gt[i];
    r.value += d * d;
    r.grad[i] = 2.0 * d;
  }
  return r;
}

LossResult mse_volume(const VoxelVolume& v, const VoxelVolume& v_gt) {
  require(v.dims == v_gt.dims, "volume dims do not match");
  return mse_volume(std::span<const double>(v.data), std::span<const double>(v_gt.data));
}

LossResult l1_image(const ImageRef& image, const ImageRef& target) {
  check_pair(image, target);
  const std::size_t n = image.pixels.size();
  require(n > 0, "empty image");
  LossResult r;
  r.grad.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = image.pixels[i] - target.pixels[i];
    r.value += std::abs(d);
    r.grad[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
  }
  r.value /= n;
  return r;
}

double ssim_image(const ImageRef& a, const ImageRef& b, double data_range) {
  return ssim_impl(a, b, data_range, false).value;
}

LossResult ssim_image_with_grad(const ImageRef& a, const ImageRef& b, double data_range) {
  return ssim_impl(a, b, data_range, true);
}

LossResult dssim_image(const ImageRef& image, const ImageRef& target, double data_range) {
  LossResult r = ssim_impl(image, target, data_range, true);
  r.value = 0.5 * (1.0 - r.value);
  for (double& g : r.grad) g *= -0.5;
  return r;
}

LossResult render_loss(const ImageRef& image, const ImageRef& target,
                       const LossWeights& weights, double data_range) {
  weights.validate();
  check_pair(image, target);
  LossResult r;
  r.grad.assign(image.pixels.size(), 0.0);
  if (weights.lambda_l1 > 0.0) {
    const LossResult l1 = l1_image(image, target);
    r.value += weights.lambda_l1 * l1.value;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += weights.lambda_l1 * l1.grad[i];
  }
  if (weights.lambda_ssim > 0.0) {
    const LossResult ds = dssim_image(image, target, data_range);
    r.value += weights.lambda_ssim * ds.value;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += weights.lambda_ssim * ds.grad[i];
  }
  return r;
}

double psnr_3d(const VoxelVolume& v, const VoxelVolume& v_gt, double data_range) {
  require(v.dims == v_gt.dims, "volume dims do not match");
  require(data_range > 0.0, "data range must be positive");
  const double mse = mse_volume(v, v_gt).value / static_cast<double>(v.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim_slices(const VoxelVolume& v, const VoxelVolume& v_gt, SliceAxis axis,
                   double data_range) {
  require(v.dims == v_gt.dims, "volume dims do not match");
  const GridDims& d = v.dims;
  int n_slices, w, h;
  switch (axis) {
    case SliceAxis::kX: n_slices = d.nx; w = d.ny; h = d.nz; break;
    case SliceAxis::kY: n_slices = d.ny; w = d.nx; h = d.nz; break;
    default: n_slices = d.nz; w = d.nx; h = d.ny; break;
  }
  std::vector<double> sa(static_cast<std::size_t>(w) * h), sb(sa.size());
  double total = 0.0;
  for (int s = 0; s < n_slices; ++s) {
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        std::size_t idx;
        switch (axis) {
          case SliceAxis::kX: idx = d.index(s, i, j); break;
          case SliceAxis::kY: idx = d.index(i, s, j); break;
          default: idx = d.index(i, j, s); break;
        }
        sa[static_cast<std::size_t>(j) * w + i] = v.data[idx];
        sb[static_cast<std::size_t>(j) * w + i] = v_gt.data[idx];
      }
    total += ssim_image({w, h, sa}, {w, h, sb}, data_range);
  }
  return total / n_slices;
}

}  // namespace splatct
