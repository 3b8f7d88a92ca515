#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "splatct/metrics.hpp"
#include "splatct/neural_layers.hpp"
#include "splatct/projector.hpp"
#include "splatct/voxgs.hpp"

namespace splatct {

// Decoder output per Gaussian: opacity (1), scale (3), rotation (4).
inline constexpr int kDecoderOutputs = 1 + 3 + 4;
// Opacity bias of a freshly initialized decoder.
inline constexpr double kInitialOpacity = 0.05;

struct ToyModelConfig {
  int patch_size = 8;
  int embed_dim = 64;
  int n_encoder_layers = 2;
  int n_fusion_layers = 2;
  int n_heads = 4;
  int mlp_ratio = 4;
  // Projection values are multiplied by this before patch embedding.
  double input_scale = 1.0;
  // Detector the model was built for; 0 accepts any size.
  int detector_nu = 0;
  int detector_nv = 0;
  // Voxel pitch (mm) used to center the initial scale output.
  double reference_pitch = 1.0;

  void validate() const;
};

struct ToyModel {
  ToyModelConfig config;
  nn::TensorTable weights;

  // Variance-scaling initialization. The ModLN conditioning layer starts at
  // zero so the modulation is the identity, and the last decoder layer starts
  // at zero so every voxel decodes to the same small Gaussian.
  static ToyModel initialize(const ToyModelConfig& config, std::uint64_t seed);
  // Config, tensor shapes and finiteness.
  void validate() const;
};

// Tokens of one view (rows), with the patch-grid shape kept for queries.
struct TokenGrid {
  int grid_w = 0;
  int grid_h = 0;
  nn::Mat tokens;
};

struct QueriedFeature {
  Eigen::RowVectorXd feature;
  bool valid = false;
};

struct DecodedGaussian {
  double alpha_raw = 0.0;
  Vec3 scale_param = Vec3::Zero();
  Vec4 rot_param = Vec4::Zero();
};

TokenGrid patchify_embed(const Projection& proj, const ToyModel& model);

// Encoder layers applied within one view.
TokenGrid encode_view(const TokenGrid& tokens, const ToyModel& model);

// Per-view Plücker conditioning vector: the rays through every patch center,
// with moments in units of dso, one 6-vector per row.
nn::Mat patch_plucker(const ScannerGeometry& geom, const ViewPose& pose, int patch_size);

// LN(tokens) * (1 + gamma) + beta with (gamma, beta) from the pose.
TokenGrid modln_inject(const TokenGrid& tokens, const ViewPose& pose,
                       const ScannerGeometry& geom, const ToyModel& model);

// Joint self-attention over the tokens of all views. With `block_diagonal`
// each token only attends within its own view.
std::vector<TokenGrid> fuse_views(const std::vector<TokenGrid>& views, const ToyModel& model,
                                  bool block_diagonal = false);

// Bilinear lookup at the projection of mu. Points outside the detector or
// behind the source give an invalid zero feature.
QueriedFeature query_feature(const TokenGrid& tokens, const Mat34& P, const Vec3& mu,
                             int patch_size, int detector_nu, int detector_nv);

// Componentwise max over valid features; the first view wins ties. argmax
// receives the winning view per channel (-1 when no view is valid).
Eigen::RowVectorXd max_pool(const std::vector<QueriedFeature>& features,
                            std::vector<int>* argmax = nullptr);

DecodedGaussian decode_gaussian(const std::vector<QueriedFeature>& features,
                                const ToyModel& model);

struct ForwardCache;

struct NeuralForward {
  VoxGSCloud cloud;
  std::shared_ptr<const ForwardCache> cache;
};

// Projections -> VoxGS cloud on the geometry's volume grid.
NeuralForward forward(const ToyModel& model, const ProjectionSet& projs);
VoxGSCloud infer(const ToyModel& model, const ProjectionSet& projs);

// Weight gradients for upstream gradients on the raw cloud parameters.
nn::TensorTable backward(const ToyModel& model, const NeuralForward& fwd,
                         const GradientBuffer& upstream);

struct ToySample {
  VoxelVolume volume;
  ProjectionSet projections;
};

struct ToyTrainConfig {
  int steps = 5000;
  std::vector<int> view_counts{2, 3, 4};
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int subvolume_factor = 2;
  double volume_weight = 1.0;
  double render_weight = 1.0;
  LossWeights render_loss;

  void validate() const;
};

struct ToyTrainResult {
  ToyModel model;
  std::vector<double> loss_trace;
};

// View positions for a step: `count` views evenly spaced among `available`,
// starting at `offset`.
std::vector<int> evenly_spaced_views(int available, int count, int offset);

// Volume loss on random sub-volumes plus render loss on the input views.
ToyTrainResult train_toy(ToyModel model, const std::vector<ToySample>& dataset,
                         const ToyTrainConfig& cfg);

// Mean volume PSNR of model inference over a dataset (all views).
double mean_psnr(const ToyModel& model, const std::vector<ToySample>& dataset);

// Random-ellipsoid phantoms with noiseless ray-marched projections.
std::vector<ToySample> make_toy_dataset(int count, const GridDims& dims, const Vec3& extent,
                                        int n_views, int detector, std::uint64_t seed);

}  // namespace splatct
