#pragma once

#include <cstdint>
#include <vector>

#include "pgds/layers.hpp"
#include "pgds/tensor.hpp"

namespace pgds {

// Training-only bridge from a human-encoder stage into the pose-feature
// space: ReLU(BatchNorm(Linear(GlobalAveragePool(f^h_i)))). Never on the
// inference path; the eval embedding is identical with or without them.
class Projector {
 public:
  Projector(int stage, int in_channels, int embedding_dim);

  void init(Rng& rng);
  // (N, h, w, C_i) -> (N, D), entries >= 0.
  Tensor forward(const Tensor& stage_feature, bool train);
  // Returns the stage-feature gradient; accumulates parameter grads.
  Tensor backward(const Tensor& d_out);

  std::vector<ParamRef> params();
  std::vector<ParamRef> buffers();
  int stage() const { return stage_; }
  int in_channels() const { return in_channels_; }

 private:
  int stage_, in_channels_, embedding_dim_;
  GlobalAvgPool gap_;
  Linear linear_;
  BatchNorm bn_;
  ReLU relu_;
  Tensor t1_, t2_, t3_;
  std::vector<std::size_t> in_shape_;
};

// Trainable parameters one projector adds: C*D + D (linear) + 2*D (affine
// normalization). Running statistics are buffers, not trainable.
std::size_t projector_param_count(int in_channels, int embedding_dim);

}  // namespace pgds
