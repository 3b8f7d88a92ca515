#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace splatct {

// Adaptive-moment update over one flat parameter group.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  // `step` is 1-based.
  void update(std::span<double> params, std::span<const double> grads, double lr, int step,
              double beta1, double beta2, double eps = 1e-8) {
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * grads[i];
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * grads[i] * grads[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
};

// Cosine decay from lr to lr * final_fraction over `total` steps.
inline double cosine_lr(double lr, double final_fraction, int step, int total) {
  if (total <= 1) return lr;
  const double t = static_cast<double>(step - 1) / (total - 1);
  const double lo = lr * final_fraction;
  return lo + 0.5 * (lr - lo) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace splatct
