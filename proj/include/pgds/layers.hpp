#pragma once

#include <string>
#include <vector>

#include "pgds/rng.hpp"
#include "pgds/tensor.hpp"

namespace pgds {

// Named handle into a layer's storage. Checkpointing and the optimizer walk
// these in registration order, which is fixed per architecture, so state
// files and update order are deterministic.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;  // null for non-trainable buffers (running stats)
};

// Forward-execution trace: layers record their names while a collection is
// active. Lets tests assert which subgraphs an inference actually ran.
namespace trace {
void begin();
std::vector<std::string> end();
void record(const std::string& name);
bool active();
}  // namespace trace

class Conv2d {
 public:
  Conv2d(std::string name, int in_c, int out_c, int kh, int kw, int stride, int pad);
  void init(Rng& rng);
  void forward(const Tensor& in, Tensor& out);  // in (N,H,W,Cin) -> out (N,H',W',Cout)
  // Accumulates parameter grads; adds input grad into *din when non-null.
  void backward(const Tensor& dout, Tensor* din);
  void collect(std::vector<ParamRef>& out);
  const std::string& name() const { return name_; }
  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

 private:
  std::string name_;
  int in_c_, out_c_, kh_, kw_, stride_, pad_;
  Tensor w_, b_, gw_, gb_;
  Tensor cached_in_;
};

// Normalizes over every axis except the trailing channel axis, so it serves
// both (N,H,W,C) feature maps and (N,C) vectors. Population (biased) variance
// is used for normalization and for the running average.
class BatchNorm {
 public:
  BatchNorm(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);
  void init();
  void forward(const Tensor& in, Tensor& out, bool train);
  void backward(const Tensor& dout, Tensor* din);
  void collect(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<ParamRef>& out);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int channels_;
  double momentum_, eps_;
  Tensor gamma_, beta_, ggamma_, gbeta_;
  Tensor running_mean_, running_var_;
  Tensor cached_xhat_;
  std::vector<double> cached_inv_std_;
  bool cached_train_ = false;
};

class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim);
  void init(Rng& rng);
  void forward(const Tensor& in, Tensor& out);  // (N,Cin) -> (N,Cout)
  void backward(const Tensor& dout, Tensor* din);
  void collect(std::vector<ParamRef>& out);
  const std::string& name() const { return name_; }
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  std::string name_;
  int in_dim_, out_dim_;
  Tensor w_, b_, gw_, gb_;
  Tensor cached_in_;
};

class ReLU {
 public:
  explicit ReLU(std::string name) : name_(std::move(name)) {}
  void forward(const Tensor& in, Tensor& out);
  void backward(const Tensor& dout, Tensor* din);  // uses cached output sign
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  Tensor cached_out_;
};

class GlobalAvgPool {
 public:
  explicit GlobalAvgPool(std::string name) : name_(std::move(name)) {}
  void forward(const Tensor& in, Tensor& out);  // (N,H,W,C) -> (N,C)
  void backward(const Tensor& dout, Tensor* din);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<std::size_t> cached_in_shape_;
};

}  // namespace pgds
