#include "splatct/neural_layers.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "splatct/error.hpp"

namespace splatct::nn {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  data.assign(n, fill);
}

TensorTable zeros_like(const TensorTable& like) {
  TensorTable out;
  for (const auto& [name, t] : like) out.emplace(name, Tensor(t.shape));
  return out;
}

const Tensor& param(const TensorTable& table, const std::string& name) {
  const auto it = table.find(name);
  if (it == table.end()) throw PreconditionError("missing model tensor: " + name);
  return it->second;
}

Tensor& grad_slot(TensorTable& grads, const std::string& name) {
  const auto it = grads.find(name);
  if (it == grads.end()) throw PreconditionError("missing gradient tensor: " + name);
  return it->second;
}

Mat linear_forward(const Mat& x, const TensorTable& w, const std::string& prefix) {
  const Tensor& weight = param(w, prefix + ".weight");
  const Tensor& bias = param(w, prefix + ".bias");
  Mat y = x * weight.mat().transpose();
  y.rowwise() += bias.row();
  return y;
}

Mat linear_backward(const Mat& x, const Mat& dy, const TensorTable& w,
                    const std::string& prefix, TensorTable& grads) {
  const Tensor& weight = param(w, prefix + ".weight");
  grad_slot(grads, prefix + ".weight").mat().noalias() += dy.transpose() * x;
  grad_slot(grads, prefix + ".bias").row() += dy.colwise().sum();
  return dy * weight.mat();
}

Mat layer_norm_forward(const Mat& x, LayerNormCache& cache) {
  const Eigen::Index n = x.cols();
  cache.xhat.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const RowVec centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    cache.xhat.row(r) = centered * inv;
  }
  return cache.xhat;
}

Mat layer_norm_backward(const Mat& d_xhat, const LayerNormCache& cache) {
  const double n = static_cast<double>(d_xhat.cols());
  Mat dx(d_xhat.rows(), d_xhat.cols());
  for (Eigen::Index r = 0; r < d_xhat.rows(); ++r) {
    const double mean_d = d_xhat.row(r).sum() / n;
    const double mean_dx = d_xhat.row(r).dot(cache.xhat.row(r)) / n;
    dx.row(r) = cache.inv_std[r] *
                (d_xhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

Mat layer_norm_affine_forward(const Mat& x, const TensorTable& w, const std::string& prefix,
                              LayerNormCache& cache) {
  Mat y = layer_norm_forward(x, cache);
  y.array().rowwise() *= param(w, prefix + ".weight").row().array();
  y.rowwise() += param(w, prefix + ".bias").row();
  return y;
}

Mat layer_norm_affine_backward(const Mat& dy, const TensorTable& w, const std::string& prefix,
                               const LayerNormCache& cache, TensorTable& grads) {
  grad_slot(grads, prefix + ".weight").row() += dy.cwiseProduct(cache.xhat).colwise().sum();
  grad_slot(grads, prefix + ".bias").row() += dy.colwise().sum();
  Mat d_xhat = dy;
  d_xhat.array().rowwise() *= param(w, prefix + ".weight").row().array();
  return layer_norm_backward(d_xhat, cache);
}

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return x.binaryExpr(dy, [&](double v, double g) {
    const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    return g * (cdf + v * pdf);
  });
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

Mat attention_forward(const Mat& x, const TensorTable& w, const std::string& prefix,
                      int n_heads, const std::vector<int>& segments, AttentionCache& cache) {
  const Eigen::Index t = x.rows();
  const Eigen::Index e = x.cols();
  require(e % n_heads == 0, "embed dim must be divisible by the head count");
  require(segments.empty() || static_cast<Eigen::Index>(segments.size()) == t,
          "segment ids must cover every token");
  const Eigen::Index dh = e / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.x = x;
  cache.qkv = linear_forward(x, w, prefix + ".qkv");
  cache.probs.assign(n_heads, Mat());
  cache.heads.resize(t, e);
  for (int h = 0; h < n_heads; ++h) {
    const auto q = cache.qkv.middleCols(h * dh, dh);
    const auto k = cache.qkv.middleCols(e + h * dh, dh);
    const auto v = cache.qkv.middleCols(2 * e + h * dh, dh);
    Mat s = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < t; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < t; ++j) {
        if (!segments.empty() && segments[i] != segments[j]) continue;
        mx = std::max(mx, s(i, j));
      }
      double sum = 0.0;
      for (Eigen::Index j = 0; j < t; ++j) {
        if (!segments.empty() && segments[i] != segments[j]) {
          s(i, j) = 0.0;
          continue;
        }
        s(i, j) = std::exp(s(i, j) - mx);
        sum += s(i, j);
      }
      s.row(i) /= sum;
    }
    cache.heads.middleCols(h * dh, dh) = s * v;
    cache.probs[h] = std::move(s);
  }
  return linear_forward(cache.heads, w, prefix + ".proj");
}

Mat attention_backward(const Mat& dy, const TensorTable& w, const std::string& prefix,
                       int n_heads, const AttentionCache& cache, TensorTable& grads) {
  const Eigen::Index t = cache.x.rows();
  const Eigen::Index e = cache.x.cols();
  const Eigen::Index dh = e / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Mat d_heads = linear_backward(cache.heads, dy, w, prefix + ".proj", grads);
  Mat d_qkv = Mat::Zero(t, 3 * e);
  for (int h = 0; h < n_heads; ++h) {
    const auto q = cache.qkv.middleCols(h * dh, dh);
    const auto k = cache.qkv.middleCols(e + h * dh, dh);
    const auto v = cache.qkv.middleCols(2 * e + h * dh, dh);
    const Mat& p = cache.probs[h];
    const auto d_out = d_heads.middleCols(h * dh, dh);
    const Mat d_p = d_out * v.transpose();
    d_qkv.middleCols(2 * e + h * dh, dh) = p.transpose() * d_out;
    Mat d_s = p.cwiseProduct(d_p);
    const Eigen::VectorXd row_dot = d_s.rowwise().sum();
    d_s -= p.cwiseProduct(row_dot * Eigen::RowVectorXd::Ones(t));
    d_qkv.middleCols(h * dh, dh) = (d_s * k) * scale;
    d_qkv.middleCols(e + h * dh, dh) = (d_s.transpose() * q) * scale;
  }
  return linear_backward(cache.x, d_qkv, w, prefix + ".qkv", grads);
}

Mat block_forward(const Mat& x, const TensorTable& w, const std::string& prefix, int n_heads,
                  const std::vector<int>& segments, BlockCache& cache) {
  cache.ln1_out = layer_norm_affine_forward(x, w, prefix + ".ln1", cache.ln1);
  cache.x1 = x + attention_forward(cache.ln1_out, w, prefix + ".attn", n_heads, segments, cache.attn);
  cache.ln2_out = layer_norm_affine_forward(cache.x1, w, prefix + ".ln2", cache.ln2);
  cache.hidden_pre = linear_forward(cache.ln2_out, w, prefix + ".mlp.fc1");
  cache.hidden = gelu(cache.hidden_pre);
  return cache.x1 + linear_forward(cache.hidden, w, prefix + ".mlp.fc2");
}

Mat block_backward(const Mat& dy, const TensorTable& w, const std::string& prefix, int n_heads,
                   const BlockCache& cache, TensorTable& grads) {
  const Mat d_hidden = linear_backward(cache.hidden, dy, w, prefix + ".mlp.fc2", grads);
  const Mat d_pre = gelu_backward(cache.hidden_pre, d_hidden);
  const Mat d_ln2 = linear_backward(cache.ln2_out, d_pre, w, prefix + ".mlp.fc1", grads);
  const Mat d_x1 = dy + layer_norm_affine_backward(d_ln2, w, prefix + ".ln2", cache.ln2, grads);
  const Mat d_ln1 = attention_backward(d_x1, w, prefix + ".attn", n_heads, cache.attn, grads);
  return d_x1 + layer_norm_affine_backward(d_ln1, w, prefix + ".ln1", cache.ln1, grads);
}

void add_block_params(TensorTable& table, const std::string& prefix, int embed, int hidden) {
  table[prefix + ".ln1.weight"] = Tensor({embed}, 1.0);
  table[prefix + ".ln1.bias"] = Tensor({embed});
  table[prefix + ".attn.qkv.weight"] = Tensor({3 * embed, embed});
  table[prefix + ".attn.qkv.bias"] = Tensor({3 * embed});
  table[prefix + ".attn.proj.weight"] = Tensor({embed, embed});
  table[prefix + ".attn.proj.bias"] = Tensor({embed});
  table[prefix + ".ln2.weight"] = Tensor({embed}, 1.0);
  table[prefix + ".ln2.bias"] = Tensor({embed});
  table[prefix + ".mlp.fc1.weight"] = Tensor({hidden, embed});
  table[prefix + ".mlp.fc1.bias"] = Tensor({hidden});
  table[prefix + ".mlp.fc2.weight"] = Tensor({embed, hidden});
  table[prefix + ".mlp.fc2.bias"] = Tensor({embed});
}

}  // namespace splatct::nn
