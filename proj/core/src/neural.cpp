#include "splatct/neural.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "splatct/error.hpp"

namespace splatct {

using nn::Mat;
using nn::Tensor;
using nn::TensorTable;

namespace {

std::string enc_prefix(int l) { return "enc." + std::to_string(l); }
std::string fuse_prefix(int l) { return "fuse." + std::to_string(l); }

struct ViewCache {
  Mat patches;
  std::vector<nn::BlockCache> encoder;
  Mat encoded;
  Mat plucker;
  Eigen::RowVectorXd cond;
  Mat cond_act;  // 1 x E
  Eigen::RowVectorXd gamma;
  nn::LayerNormCache ln;
};

struct Query {
  std::array<int, 4> token{0, 0, 0, 0};
  std::array<double, 4> weight{0, 0, 0, 0};
  bool valid = false;
};

}  // namespace

struct ForwardCache {
  int n_views = 0;
  int tokens_per_view = 0;
  std::vector<ViewCache> views;
  Mat fused_in;
  std::vector<nn::BlockCache> fusion;
  Mat fused;
  std::vector<Query> queries;  // voxel-major, n_views per voxel
  std::vector<int> argmax;     // voxel-major, embed per voxel
  Mat pooled;
  Mat h1_pre, h1, h2_pre, h2;
};

namespace {

Mat extract_patches(const Projection& proj, int p, double input_scale) {
  require(p >= 1 && proj.nu % p == 0 && proj.nv % p == 0,
          "detector dims must be divisible by the patch size");
  const int gw = proj.nu / p;
  const int gh = proj.nv / p;
  Mat patches(gw * gh, p * p);
  for (int ty = 0; ty < gh; ++ty)
    for (int tx = 0; tx < gw; ++tx)
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          patches(ty * gw + tx, y * p + x) = input_scale * proj.at(tx * p + x, ty * p + y);
  return patches;
}

Mat encode_tokens(const Mat& x, const ToyModel& model, std::vector<nn::BlockCache>& caches) {
  Mat h = x;
  caches.assign(model.config.n_encoder_layers, nn::BlockCache());
  for (int l = 0; l < model.config.n_encoder_layers; ++l)
    h = nn::block_forward(h, model.weights, enc_prefix(l), model.config.n_heads, {}, caches[l]);
  return h;
}

Mat modln_forward(const Mat& tokens, const Mat& plucker, const ToyModel& model, ViewCache& c) {
  const int e = model.config.embed_dim;
  c.plucker = plucker;
  c.cond = nn::linear_forward(plucker, model.weights, "modln.plucker").colwise().mean();
  c.cond_act = c.cond.unaryExpr([](double v) { return nn::silu(v); });
  const Mat gb = nn::linear_forward(c.cond_act, model.weights, "modln.cond");
  c.gamma = gb.leftCols(e);
  const Eigen::RowVectorXd beta = gb.rightCols(e);
  Mat out = nn::layer_norm_forward(tokens, c.ln);
  out.array().rowwise() *= (1.0 + c.gamma.array());
  out.rowwise() += beta;
  return out;
}

Mat modln_backward(const Mat& dy, const ToyModel& model, const ViewCache& c, TensorTable& grads) {
  const int e = model.config.embed_dim;
  Mat d_gb(1, 2 * e);
  d_gb.leftCols(e) = dy.cwiseProduct(c.ln.xhat).colwise().sum();
  d_gb.rightCols(e) = dy.colwise().sum();
  const Mat d_act = nn::linear_backward(c.cond_act, d_gb, model.weights, "modln.cond", grads);
  Eigen::RowVectorXd d_cond(e);
  for (int j = 0; j < e; ++j) d_cond[j] = d_act(0, j) * nn::silu_grad(c.cond[j]);
  const Mat d_proj = Mat::Ones(c.plucker.rows(), 1) * (d_cond / static_cast<double>(c.plucker.rows()));
  nn::linear_backward(c.plucker, d_proj, model.weights, "modln.plucker", grads);
  Mat d_xhat = dy;
  d_xhat.array().rowwise() *= (1.0 + c.gamma.array());
  return nn::layer_norm_backward(d_xhat, c.ln);
}

Mat fuse_tokens(const Mat& x, const ToyModel& model, const std::vector<int>& segments,
                std::vector<nn::BlockCache>& caches) {
  Mat h = x;
  caches.assign(model.config.n_fusion_layers, nn::BlockCache());
  for (int l = 0; l < model.config.n_fusion_layers; ++l)
    h = nn::block_forward(h, model.weights, fuse_prefix(l), model.config.n_heads, segments, caches[l]);
  return h;
}

Query make_query(int gw, int gh, const Mat34& P, const Vec3& mu, int patch, int nu, int nv) {
  Query q;
  const auto uv = project_point(P, mu);
  if (!uv || (*uv)[0] < 0.0 || (*uv)[0] > nu || (*uv)[1] < 0.0 || (*uv)[1] > nv) return q;
  q.valid = true;
  auto axis = [](double g, int n, int& i0, int& i1, double& f) {
    if (n == 1) {
      i0 = i1 = 0;
      f = 0.0;
      return;
    }
    g = std::clamp(g, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<int>(std::floor(g)), n - 2);
    i1 = i0 + 1;
    f = g - i0;
  };
  int x0, x1, y0, y1;
  double fx, fy;
  axis((*uv)[0] / patch - 0.5, gw, x0, x1, fx);
  axis((*uv)[1] / patch - 0.5, gh, y0, y1, fy);
  q.token = {y0 * gw + x0, y0 * gw + x1, y1 * gw + x0, y1 * gw + x1};
  q.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return q;
}

Eigen::RowVectorXd interpolate(const Mat& tokens, int row_offset, const Query& q) {
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(tokens.cols());
  for (int j = 0; j < 4; ++j) f += q.weight[j] * tokens.row(row_offset + q.token[j]);
  return f;
}

Mat decoder_forward(const Mat& pooled, const ToyModel& model, ForwardCache* c) {
  Mat h1_pre = nn::linear_forward(pooled, model.weights, "decoder.fc1");
  Mat h1 = nn::gelu(h1_pre);
  Mat h2_pre = nn::linear_forward(h1, model.weights, "decoder.fc2");
  Mat h2 = nn::gelu(h2_pre);
  Mat out = nn::linear_forward(h2, model.weights, "decoder.fc3");
  if (c) {
    c->h1_pre = std::move(h1_pre);
    c->h1 = std::move(h1);
    c->h2_pre = std::move(h2_pre);
    c->h2 = std::move(h2);
  }
  return out;
}

double normal_std(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

void ToyModelConfig::validate() const {
  require(patch_size >= 1, "patch size must be >= 1");
  require(embed_dim >= 1 && n_heads >= 1 && embed_dim % n_heads == 0,
          "embed dim must be divisible by the head count");
  require(n_encoder_layers >= 0 && n_fusion_layers >= 0, "layer counts must be >= 0");
  require(mlp_ratio >= 1, "mlp ratio must be >= 1");
  require(std::isfinite(input_scale) && input_scale > 0.0, "input scale must be positive");
  require(reference_pitch > 0.0, "reference pitch must be positive");
}

ToyModel ToyModel::initialize(const ToyModelConfig& config, std::uint64_t seed) {
  config.validate();
  ToyModel m;
  m.config = config;
  const int e = config.embed_dim;
  const int p2 = config.patch_size * config.patch_size;
  TensorTable& w = m.weights;
  w["patch_embed.weight"] = Tensor({e, p2});
  w["patch_embed.bias"] = Tensor({e});
  for (int l = 0; l < config.n_encoder_layers; ++l)
    nn::add_block_params(w, enc_prefix(l), e, config.mlp_ratio * e);
  w["modln.plucker.weight"] = Tensor({e, 6});
  w["modln.plucker.bias"] = Tensor({e});
  w["modln.cond.weight"] = Tensor({2 * e, e});
  w["modln.cond.bias"] = Tensor({2 * e});
  for (int l = 0; l < config.n_fusion_layers; ++l)
    nn::add_block_params(w, fuse_prefix(l), e, config.mlp_ratio * e);
  w["decoder.fc1.weight"] = Tensor({e, e});
  w["decoder.fc1.bias"] = Tensor({e});
  w["decoder.fc2.weight"] = Tensor({e, e});
  w["decoder.fc2.bias"] = Tensor({e});
  w["decoder.fc3.weight"] = Tensor({kDecoderOutputs, e});
  w["decoder.fc3.bias"] = Tensor({kDecoderOutputs});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, t] : w) {
    const bool is_weight = name.size() > 7 && name.ends_with(".weight");
    if (!is_weight || t.shape.size() != 2) continue;  // biases and LN stay as set
    if (name == "modln.cond.weight") continue;          // zero: plain LN at start
    if (name == "decoder.fc3.weight") continue;         // zero: uniform initial cloud
    const double std = normal_std(t.cols());
    for (double& v : t.data) v = std * normal(rng);
  }
  // Start the decoder at a small positive opacity (clamped opacities get no
  // gradient), the default scale and identity rotation.
  Tensor& b = w["decoder.fc3.bias"];
  b.data[0] = kInitialOpacity;
  const double s_min = kMinScaleFraction * config.reference_pitch;
  const double s0 = kDefaultScaleFraction * config.reference_pitch;
  for (int a = 1; a <= 3; ++a) b.data[a] = softplus_inverse(s0 - s_min);
  b.data[4] = 1.0;
  return m;
}

void ToyModel::validate() const {
  config.validate();
  const ToyModel reference = initialize(config, 0);
  for (const auto& [name, t] : reference.weights) {
    const auto it = weights.find(name);
    require(it != weights.end(), "model is missing tensor " + name);
    require(it->second.shape == t.shape, "tensor " + name + " has the wrong shape");
    for (double v : it->second.data) require(std::isfinite(v), "tensor " + name + " is not finite");
  }
  require(weights.size() == reference.weights.size(), "model has unexpected tensors");
}

TokenGrid patchify_embed(const Projection& proj, const ToyModel& model) {
  const int p = model.config.patch_size;
  TokenGrid g;
  const Mat patches = extract_patches(proj, p, model.config.input_scale);
  g.grid_w = proj.nu / p;
  g.grid_h = proj.nv / p;
  g.tokens = nn::linear_forward(patches, model.weights, "patch_embed");
  return g;
}

TokenGrid encode_view(const TokenGrid& tokens, const ToyModel& model) {
  std::vector<nn::BlockCache> caches;
  TokenGrid out = tokens;
  out.tokens = encode_tokens(tokens.tokens, model, caches);
  return out;
}

nn::Mat patch_plucker(const ScannerGeometry& geom, const ViewPose& pose, int patch_size) {
  require(geom.detector_nu % patch_size == 0 && geom.detector_nv % patch_size == 0,
          "detector dims must be divisible by the patch size");
  const int gw = geom.detector_nu / patch_size;
  const int gh = geom.detector_nv / patch_size;
  Mat out(gw * gh, 6);
  for (int ty = 0; ty < gh; ++ty)
    for (int tx = 0; tx < gw; ++tx) {
      const Ray ray = detector_ray(pose, (tx + 0.5) * patch_size, (ty + 0.5) * patch_size);
      const PluckerEmbedding pl = plucker_embedding(ray);
      const int r = ty * gw + tx;
      out.row(r).head<3>() = pl.direction.transpose();
      out.row(r).tail<3>() = pl.moment.transpose() / geom.dso;
    }
  return out;
}

TokenGrid modln_inject(const TokenGrid& tokens, const ViewPose& pose,
                       const ScannerGeometry& geom, const ToyModel& model) {
  ViewCache c;
  TokenGrid out = tokens;
  out.tokens = modln_forward(tokens.tokens, patch_plucker(geom, pose, model.config.patch_size),
                             model, c);
  return out;
}

std::vector<TokenGrid> fuse_views(const std::vector<TokenGrid>& views, const ToyModel& model,
                                  bool block_diagonal) {
  require(!views.empty(), "fusion needs at least one view");
  const Eigen::Index t = views[0].tokens.rows();
  Mat joint(t * static_cast<Eigen::Index>(views.size()), model.config.embed_dim);
  std::vector<int> segments;
  for (std::size_t k = 0; k < views.size(); ++k) {
    require(views[k].tokens.rows() == t, "all views must have the same token count");
    joint.middleRows(k * t, t) = views[k].tokens;
    if (block_diagonal) segments.insert(segments.end(), t, static_cast<int>(k));
  }
  std::vector<nn::BlockCache> caches;
  const Mat fused = fuse_tokens(joint, model, segments, caches);
  std::vector<TokenGrid> out = views;
  for (std::size_t k = 0; k < views.size(); ++k) out[k].tokens = fused.middleRows(k * t, t);
  return out;
}

QueriedFeature query_feature(const TokenGrid& tokens, const Mat34& P, const Vec3& mu,
                             int patch_size, int detector_nu, int detector_nv) {
  const Query q = make_query(tokens.grid_w, tokens.grid_h, P, mu, patch_size, detector_nu, detector_nv);
  QueriedFeature f;
  f.valid = q.valid;
  f.feature = q.valid ? interpolate(tokens.tokens, 0, q)
                      : Eigen::RowVectorXd::Zero(tokens.tokens.cols());
  return f;
}

Eigen::RowVectorXd max_pool(const std::vector<QueriedFeature>& features, std::vector<int>* argmax) {
  require(!features.empty(), "max pool needs at least one feature");
  const Eigen::Index e = features[0].feature.size();
  Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(e);
  std::vector<int> winner(e, -1);
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (!features[k].valid) continue;
    for (Eigen::Index c = 0; c < e; ++c)
      if (winner[c] < 0 || features[k].feature[c] > pooled[c]) {
        pooled[c] = features[k].feature[c];
        winner[c] = static_cast<int>(k);
      }
  }
  if (argmax) *argmax = std::move(winner);
  return pooled;
}

DecodedGaussian decode_gaussian(const std::vector<QueriedFeature>& features, const ToyModel& model) {
  const Mat pooled = max_pool(features);
  const Mat out = decoder_forward(pooled, model, nullptr);
  DecodedGaussian d;
  d.alpha_raw = out(0, 0);
  d.scale_param = Vec3(out(0, 1), out(0, 2), out(0, 3));
  d.rot_param = Vec4(out(0, 4), out(0, 5), out(0, 6), out(0, 7));
  return d;
}

NeuralForward forward(const ToyModel& model, const ProjectionSet& projs) {
  require(!projs.views.empty(), "forward needs at least one view");
  projs.validate();
  const ToyModelConfig& cfg = model.config;
  const ScannerGeometry& geom = projs.geometry;
  if (cfg.detector_nu > 0 || cfg.detector_nv > 0)
    require(geom.detector_nu == cfg.detector_nu && geom.detector_nv == cfg.detector_nv,
            "detector dims do not match the model");
  const int p = cfg.patch_size;
  const int e = cfg.embed_dim;
  const int nu = geom.detector_nu;
  const int nv = geom.detector_nv;
  const int gw = nu / p;
  const int gh = nv / p;
  const std::vector<ViewPose> poses = projs.poses();

  auto cache = std::make_shared<ForwardCache>();
  ForwardCache& c = *cache;
  c.n_views = static_cast<int>(projs.views.size());
  c.views.resize(c.n_views);
  std::vector<int> segments;
  for (int k = 0; k < c.n_views; ++k) {
    ViewCache& vc = c.views[k];
    vc.patches = extract_patches(projs.views[k], p, cfg.input_scale);
    const Mat embedded = nn::linear_forward(vc.patches, model.weights, "patch_embed");
    vc.encoded = encode_tokens(embedded, model, vc.encoder);
    const Mat conditioned = modln_forward(vc.encoded, patch_plucker(geom, poses[k], p), model, vc);
    if (k == 0) {
      c.tokens_per_view = static_cast<int>(conditioned.rows());
      c.fused_in.resize(static_cast<Eigen::Index>(c.n_views) * c.tokens_per_view, e);
    }
    c.fused_in.middleRows(k * c.tokens_per_view, c.tokens_per_view) = conditioned;
  }
  c.fused = fuse_tokens(c.fused_in, model, segments, c.fusion);

  const GridDims& dims = geom.volume_dims;
  const std::size_t n = dims.count();
  std::vector<Mat34> proj_mats;
  for (const auto& pose : poses) proj_mats.push_back(projection_matrix(pose));
  c.queries.resize(n * c.n_views);
  c.argmax.assign(n * e, -1);
  c.pooled = Mat::Zero(static_cast<Eigen::Index>(n), e);
  Eigen::RowVectorXd f(e);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = static_cast<int>(i % dims.nx);
    const int y = static_cast<int>((i / dims.nx) % dims.ny);
    const int z = static_cast<int>(i / (static_cast<std::size_t>(dims.nx) * dims.ny));
    const Vec3 mu = centroid_position(dims, geom.volume_extent, x, y, z);
    int* winner = &c.argmax[i * e];
    for (int k = 0; k < c.n_views; ++k) {
      Query& q = c.queries[i * c.n_views + k];
      q = make_query(gw, gh, proj_mats[k], mu, p, nu, nv);
      if (!q.valid) continue;
      f = interpolate(c.fused, k * c.tokens_per_view, q);
      for (int ch = 0; ch < e; ++ch)
        if (winner[ch] < 0 || f[ch] > c.pooled(i, ch)) {
          c.pooled(i, ch) = f[ch];
          winner[ch] = k;
        }
    }
  }

  const Mat out = decoder_forward(c.pooled, model, &c);
  NeuralForward result;
  result.cloud = VoxGSCloud(dims, geom.volume_extent);
  for (std::size_t i = 0; i < n; ++i) {
    result.cloud.alpha[i] = out(i, 0);
    for (int a = 0; a < 3; ++a) result.cloud.scale_param[3 * i + a] = out(i, 1 + a);
    for (int a = 0; a < 4; ++a) result.cloud.rot_param[4 * i + a] = out(i, 4 + a);
  }
  result.cache = std::move(cache);
  return result;
}

VoxGSCloud infer(const ToyModel& model, const ProjectionSet& projs) {
  return forward(model, projs).cloud;
}

TensorTable backward(const ToyModel& model, const NeuralForward& fwd, const GradientBuffer& upstream) {
  require(fwd.cache != nullptr, "backward needs the cache of a forward pass");
  const ForwardCache& c = *fwd.cache;
  const std::size_t n = fwd.cloud.size();
  require(upstream.size() == n, "upstream gradient does not match the cloud");
  const ToyModelConfig& cfg = model.config;
  const int e = cfg.embed_dim;
  TensorTable grads = nn::zeros_like(model.weights);

  Mat d_out(static_cast<Eigen::Index>(n), kDecoderOutputs);
  for (std::size_t i = 0; i < n; ++i) {
    d_out(i, 0) = upstream.d_alpha[i];
    for (int a = 0; a < 3; ++a) d_out(i, 1 + a) = upstream.d_scale_param[3 * i + a];
    for (int a = 0; a < 4; ++a) d_out(i, 4 + a) = upstream.d_rot_param[4 * i + a];
  }
  Mat d = nn::linear_backward(c.h2, d_out, model.weights, "decoder.fc3", grads);
  d = nn::gelu_backward(c.h2_pre, d);
  d = nn::linear_backward(c.h1, d, model.weights, "decoder.fc2", grads);
  d = nn::gelu_backward(c.h1_pre, d);
  const Mat d_pooled = nn::linear_backward(c.pooled, d, model.weights, "decoder.fc1", grads);

  Mat d_fused = Mat::Zero(c.fused.rows(), e);
  for (std::size_t i = 0; i < n; ++i) {
    for (int ch = 0; ch < e; ++ch) {
      const int k = c.argmax[i * e + ch];
      if (k < 0) continue;
      const double g = d_pooled(i, ch);
      if (g == 0.0) continue;
      const Query& q = c.queries[i * c.n_views + k];
      const int offset = k * c.tokens_per_view;
      for (int j = 0; j < 4; ++j) d_fused(offset + q.token[j], ch) += q.weight[j] * g;
    }
  }

  Mat d_joint = d_fused;
  for (int l = cfg.n_fusion_layers - 1; l >= 0; --l)
    d_joint = nn::block_backward(d_joint, model.weights, fuse_prefix(l), cfg.n_heads, c.fusion[l], grads);

  for (int k = 0; k < c.n_views; ++k) {
    const ViewCache& vc = c.views[k];
    Mat dv = modln_backward(d_joint.middleRows(k * c.tokens_per_view, c.tokens_per_view), model, vc, grads);
    for (int l = cfg.n_encoder_layers - 1; l >= 0; --l)
      dv = nn::block_backward(dv, model.weights, enc_prefix(l), cfg.n_heads, vc.encoder[l], grads);
    nn::linear_backward(vc.patches, dv, model.weights, "patch_embed", grads);
  }
  return grads;
}

}  // namespace splatct
