#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pgds/config.hpp"
#include "pgds/datagen.hpp"
#include "pgds/layers.hpp"
#include "pgds/tensor.hpp"

namespace pgds {

// The five stage outputs plus the pooled final embedding of one batch.
struct MultiScaleFeatureSet {
  std::array<Tensor, 5> stages;  // stage i: (N, H/2^{i+1}, W/2^{i+1}, C_i)
  Tensor pooled;                 // (N, C_4)
  Tensor embedding;              // (N, D)
};

// Trainable student: a 5-stage stride-2 convolutional pyramid (two 3x3 convs
// with batch norm per stage) topped by global pooling and a linear embedding
// head. Stage spatial sizes halve exactly, so inputs must be multiples of 32.
class HumanEncoder {
 public:
  HumanEncoder(const std::vector<int>& channels, int embedding_dim);

  void init(std::uint64_t seed);
  MultiScaleFeatureSet forward(const Tensor& images, bool train);

  // d_embedding: (N, D); d_stage_extra[i] (optional, may hold empty tensors)
  // adds projector-branch gradients into stage i's output gradient.
  // When d_input is non-null the input-pixel gradient is accumulated there.
  void backward(const Tensor& d_embedding, const std::array<Tensor, 5>* d_stage_extra,
                Tensor* d_input);

  std::vector<ParamRef> params();
  std::vector<ParamRef> buffers();
  const std::vector<int>& channels() const { return channels_; }
  int embedding_dim() const { return embedding_dim_; }

 private:
  struct Stage {
    std::unique_ptr<Conv2d> conv1;
    std::unique_ptr<BatchNorm> bn1;
    std::unique_ptr<ReLU> relu1;
    std::unique_ptr<Conv2d> conv2;
    std::unique_ptr<BatchNorm> bn2;
    std::unique_ptr<ReLU> relu2;
    Tensor t1, t2, t3, t4, t5;  // forward intermediates for the backward pass
  };

  std::vector<int> channels_;
  int embedding_dim_;
  std::array<Stage, 5> stages_;
  GlobalAvgPool gap_;
  Linear head_;
  Tensor cached_input_;
  MultiScaleFeatureSet cached_out_;
  bool have_forward_ = false;
};

// Per-joint spatial moments of a confidence stack: mass, centroid x,
// centroid y per joint, each centroid normalized to [0, 1] over its axis.
// conf is (N, Hc, Wc, J); the result is (N, 3J) laid out joint-major.
// Keypoint positions survive this readout, so the rows carry both the pose
// and the skeleton geometry that a plain spatial average would erase.
Tensor pose_spatial_moments(const Tensor& conf);

// Frozen teacher: a small convolutional stack that predicts a J-channel
// confidence map at 1/4 resolution, read out as per-joint spatial moments
// and passed through a fixed linear layer into the D-dimensional pose
// embedding. The linear layer is not trained by gradient descent: after
// confidence-map pretraining it is set to standardize the moment channels
// and spread them across D logits at a fixed scale, then the whole module
// is frozen.
class PoseEncoder {
 public:
  PoseEncoder(int joints, int embedding_dim);

  void init(std::uint64_t seed);

  // Training-time entry point (heatmap regression). Rejected once frozen.
  Tensor predict_confidence(const Tensor& images);
  // Backward for the regression loss; rejected once frozen.
  void backward_confidence(const Tensor& d_conf);

  // Public inference contract: requires the frozen state.
  void pose_forward(const Tensor& images, Tensor& confidence, Tensor& embedding);

  // Fits the fixed moments->logit layer from train-set statistics:
  // moment_rows is (N, 3J) spatial moments over the calibration images.
  void calibrate(const Tensor& moment_rows, std::uint64_t seed);

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  // Conv-stack parameters. The trainable accessor is rejected when frozen.
  std::vector<ParamRef> trainable_params();
  std::vector<ParamRef> all_params();
  std::uint64_t param_hash() const;
  int joints() const { return joints_; }
  int embedding_dim() const { return embedding_dim_; }

 private:
  Tensor forward_stack(const Tensor& images);

  int joints_, embedding_dim_;
  Conv2d c1_, c2_, c3_, c4_;
  ReLU r1_, r2_, r3_;
  Tensor t1_, t2_, t3_, t4_, t5_, t6_;
  Linear fc_;  // fixed after calibration, never in any optimizer
  bool frozen_ = false;
};

struct PosePretrainReport {
  double held_out_mse = 0.0;
  double first_epoch_train_mse = 0.0;
  double last_epoch_train_mse = 0.0;
  int epochs = 0;
};

// MSE pretraining of the confidence stack on the dataset's ground-truth
// keypoint heatmaps (train split, with a held-out tail for validation),
// followed by calibration of the fixed linear head and freezing.
PosePretrainReport pretrain_pose_encoder(PoseEncoder& enc, const Dataset& ds, int epochs,
                                         std::uint64_t seed);

// Mean squared confidence-map error over the given record indices.
double pose_confidence_mse(PoseEncoder& enc, const Dataset& ds, const std::vector<int>& indices);

}  // namespace pgds
