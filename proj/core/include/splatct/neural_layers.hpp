#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

namespace splatct::nn {

// Row-major so that one token (or one voxel) is one contiguous row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  Eigen::Map<Mat> mat() { return {data.data(), rows(), cols()}; }
  Eigen::Map<const Mat> mat() const { return {data.data(), rows(), cols()}; }
  Eigen::Map<RowVec> row() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
  Eigen::Map<const RowVec> row() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }
};

// Ordered by name so iteration (and serialization) order is stable.
using TensorTable = std::map<std::string, Tensor>;

// A table of zeros shaped like `like`.
TensorTable zeros_like(const TensorTable& like);

const Tensor& param(const TensorTable& table, const std::string& name);
Tensor& grad_slot(TensorTable& grads, const std::string& name);

inline constexpr double kLayerNormEps = 1e-8;

// y = x W^T + b with W of shape (out, in).
Mat linear_forward(const Mat& x, const TensorTable& w, const std::string& prefix);
// Accumulates dW, db into grads and returns dx.
Mat linear_backward(const Mat& x, const Mat& dy, const TensorTable& w,
                    const std::string& prefix, TensorTable& grads);

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

// Per-row normalization without affine parameters.
Mat layer_norm_forward(const Mat& x, LayerNormCache& cache);
Mat layer_norm_backward(const Mat& d_xhat, const LayerNormCache& cache);

// Normalization followed by per-channel weight and bias from `prefix`.
Mat layer_norm_affine_forward(const Mat& x, const TensorTable& w, const std::string& prefix,
                              LayerNormCache& cache);
Mat layer_norm_affine_backward(const Mat& dy, const TensorTable& w, const std::string& prefix,
                               const LayerNormCache& cache, TensorTable& grads);

// Exact (erf) GELU.
Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

double silu(double x);
double silu_grad(double x);

struct AttentionCache {
  Mat x;
  Mat qkv;
  std::vector<Mat> probs;  // one T x T matrix per head
  Mat heads;               // concatenated head outputs, T x E
};

// Multi-head self-attention. When `segments` is non-empty, token i may only
// attend to tokens with the same segment id.
Mat attention_forward(const Mat& x, const TensorTable& w, const std::string& prefix,
                      int n_heads, const std::vector<int>& segments, AttentionCache& cache);
Mat attention_backward(const Mat& dy, const TensorTable& w, const std::string& prefix,
                       int n_heads, const AttentionCache& cache, TensorTable& grads);

struct BlockCache {
  LayerNormCache ln1;
  Mat ln1_out;
  AttentionCache attn;
  Mat x1;
  LayerNormCache ln2;
  Mat ln2_out;
  Mat hidden_pre;
  Mat hidden;
};

// Pre-norm transformer block: x + Attn(LN(x)), then + MLP(LN(.)).
Mat block_forward(const Mat& x, const TensorTable& w, const std::string& prefix, int n_heads,
                  const std::vector<int>& segments, BlockCache& cache);
Mat block_backward(const Mat& dy, const TensorTable& w, const std::string& prefix, int n_heads,
                   const BlockCache& cache, TensorTable& grads);

// Parameter shapes of one block, for initialization.
void add_block_params(TensorTable& table, const std::string& prefix, int embed, int hidden);

}  // namespace splatct::nn
