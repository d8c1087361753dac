#include "pgds/layers.hpp"

#include <cmath>

#include "pgds/common.hpp"
#include "pgds/kernels.hpp"

namespace pgds {

namespace trace {

namespace {
bool g_active = false;
std::vector<std::string> g_nodes;
}  // namespace

void begin() {
  g_active = true;
  g_nodes.clear();
}

std::vector<std::string> end() {
  g_active = false;
  return std::move(g_nodes);
}

void record(const std::string& name) {
  if (g_active) g_nodes.push_back(name);
}

bool active() { return g_active; }

}  // namespace trace

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_c, int out_c, int kh, int kw, int stride, int pad)
    : name_(std::move(name)), in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), stride_(stride),
      pad_(pad) {
  PGDS_CHECK_ARG(in_c > 0 && out_c > 0 && kh > 0 && kw > 0 && stride > 0 && pad >= 0,
                 "conv ", name_, ": bad geometry");
  const auto co = static_cast<std::size_t>(out_c_);
  w_ = Tensor({co, static_cast<std::size_t>(kh_), static_cast<std::size_t>(kw_),
               static_cast<std::size_t>(in_c_)});
  b_ = Tensor({co});
  gw_ = Tensor(w_.shape());
  gb_ = Tensor(b_.shape());
}

void Conv2d::init(Rng& rng) {
  const double std = std::sqrt(2.0 / (kh_ * kw_ * in_c_));
  for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = rng.normal(0.0, std);
  b_.zero();
}

void Conv2d::forward(const Tensor& in, Tensor& out) {
  PGDS_CHECK_ARG(in.rank() == 4 && static_cast<int>(in.dim(3)) == in_c_, "conv ", name_,
                 ": expected (N,H,W,", in_c_, ") input");
  trace::record(name_);
  kernels::Conv2dShape s;
  s.n = static_cast<int>(in.dim(0));
  s.in_h = static_cast<int>(in.dim(1));
  s.in_w = static_cast<int>(in.dim(2));
  s.in_c = in_c_;
  s.out_h = (s.in_h + 2 * pad_ - kh_) / stride_ + 1;
  s.out_w = (s.in_w + 2 * pad_ - kw_) / stride_ + 1;
  s.out_c = out_c_;
  s.kh = kh_;
  s.kw = kw_;
  s.stride = stride_;
  s.pad = pad_;
  PGDS_CHECK_ARG(s.out_h > 0 && s.out_w > 0, "conv ", name_, ": input too small");
  out = Tensor({in.dim(0), static_cast<std::size_t>(s.out_h), static_cast<std::size_t>(s.out_w),
                static_cast<std::size_t>(out_c_)});
  kernels::conv2d_forward(in.data(), w_.data(), b_.data(), out.data(), s);
  cached_in_ = in;
}

void Conv2d::backward(const Tensor& dout, Tensor* din) {
  PGDS_CHECK_STATE(!cached_in_.empty(), "conv ", name_, ": backward before forward");
  kernels::Conv2dShape s;
  s.n = static_cast<int>(cached_in_.dim(0));
  s.in_h = static_cast<int>(cached_in_.dim(1));
  s.in_w = static_cast<int>(cached_in_.dim(2));
  s.in_c = in_c_;
  s.out_h = static_cast<int>(dout.dim(1));
  s.out_w = static_cast<int>(dout.dim(2));
  s.out_c = out_c_;
  s.kh = kh_;
  s.kw = kw_;
  s.stride = stride_;
  s.pad = pad_;
  kernels::conv2d_backward_params(cached_in_.data(), dout.data(), gw_.data(), gb_.data(), s);
  if (din) {
    Tensor scratch(cached_in_.shape());
    kernels::conv2d_backward_input(dout.data(), w_.data(), scratch.data(), s);
    add_into(*din, scratch);
  }
}

void Conv2d::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".w", &w_, &gw_});
  out.push_back({name_ + ".b", &b_, &gb_});
}

BatchNorm::BatchNorm(std::string name, int channels, double momentum, double eps)
    : name_(std::move(name)), channels_(channels), momentum_(momentum), eps_(eps) {
  PGDS_CHECK_ARG(channels > 0, "batchnorm ", name_, ": bad channel count");
  const auto c = static_cast<std::size_t>(channels_);
  gamma_ = Tensor({c});
  beta_ = Tensor({c});
  ggamma_ = Tensor({c});
  gbeta_ = Tensor({c});
  running_mean_ = Tensor({c});
  running_var_ = Tensor({c});
  init();
}

void BatchNorm::init() {
  gamma_.fill(1.0);
  beta_.zero();
  running_mean_.zero();
  running_var_.fill(1.0);
}

void BatchNorm::forward(const Tensor& in, Tensor& out, bool train) {
  PGDS_CHECK_ARG(in.rank() >= 2 && static_cast<int>(in.dim(in.rank() - 1)) == channels_,
                 "batchnorm ", name_, ": trailing dim must be ", channels_);
  trace::record(name_);
  const std::size_t rows = in.size() / static_cast<std::size_t>(channels_);
  if (!out.same_shape(in)) out = Tensor(in.shape());
  cached_xhat_ = Tensor(in.shape());
  cached_inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  cached_train_ = train;

  std::vector<double> mean(static_cast<std::size_t>(channels_)),
      var(static_cast<std::size_t>(channels_));
  if (train) {
    kernels::channel_stats(in.data(), rows, channels_, mean.data(), var.data());
    for (int c = 0; c < channels_; ++c) {
      running_mean_[static_cast<std::size_t>(c)] =
          (1.0 - momentum_) * running_mean_[static_cast<std::size_t>(c)] + momentum_ * mean[static_cast<std::size_t>(c)];
      running_var_[static_cast<std::size_t>(c)] =
          (1.0 - momentum_) * running_var_[static_cast<std::size_t>(c)] + momentum_ * var[static_cast<std::size_t>(c)];
    }
  } else {
    for (int c = 0; c < channels_; ++c) {
      mean[static_cast<std::size_t>(c)] = running_mean_[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] = running_var_[static_cast<std::size_t>(c)];
    }
  }
  for (int c = 0; c < channels_; ++c)
    cached_inv_std_[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps_);

  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * static_cast<std::size_t>(channels_);
    double* xh = cached_xhat_.data() + r * static_cast<std::size_t>(channels_);
    double* y = out.data() + r * static_cast<std::size_t>(channels_);
    for (int c = 0; c < channels_; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      xh[cc] = (x[cc] - mean[cc]) * cached_inv_std_[cc];
      y[cc] = gamma_[cc] * xh[cc] + beta_[cc];
    }
  }
}

void BatchNorm::backward(const Tensor& dout, Tensor* din) {
  PGDS_CHECK_STATE(!cached_xhat_.empty(), "batchnorm ", name_, ": backward before forward");
  const std::size_t rows = dout.size() / static_cast<std::size_t>(channels_);
  const double inv_rows = 1.0 / static_cast<double>(rows);

  std::vector<double> sum_dy(static_cast<std::size_t>(channels_), 0.0);
  std::vector<double> sum_dy_xhat(static_cast<std::size_t>(channels_), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dy = dout.data() + r * static_cast<std::size_t>(channels_);
    const double* xh = cached_xhat_.data() + r * static_cast<std::size_t>(channels_);
    for (int c = 0; c < channels_; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      sum_dy[cc] += dy[cc];
      sum_dy_xhat[cc] += dy[cc] * xh[cc];
    }
  }
  for (int c = 0; c < channels_; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    gbeta_[cc] += sum_dy[cc];
    ggamma_[cc] += sum_dy_xhat[cc];
  }
  if (!din) return;

  for (std::size_t r = 0; r < rows; ++r) {
    const double* dy = dout.data() + r * static_cast<std::size_t>(channels_);
    const double* xh = cached_xhat_.data() + r * static_cast<std::size_t>(channels_);
    double* dx = din->data() + r * static_cast<std::size_t>(channels_);
    for (int c = 0; c < channels_; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      const double g = gamma_[cc] * cached_inv_std_[cc];
      if (cached_train_) {
        dx[cc] += g * (dy[cc] - sum_dy[cc] * inv_rows - xh[cc] * sum_dy_xhat[cc] * inv_rows);
      } else {
        dx[cc] += g * dy[cc];
      }
    }
  }
}

void BatchNorm::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".gamma", &gamma_, &ggamma_});
  out.push_back({name_ + ".beta", &beta_, &gbeta_});
}

void BatchNorm::collect_buffers(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".running_mean", &running_mean_, nullptr});
  out.push_back({name_ + ".running_var", &running_var_, nullptr});
}

Linear::Linear(std::string name, int in_dim, int out_dim)
    : name_(std::move(name)), in_dim_(in_dim), out_dim_(out_dim) {
  PGDS_CHECK_ARG(in_dim > 0 && out_dim > 0, "linear ", name_, ": bad dimensions");
  w_ = Tensor({static_cast<std::size_t>(out_dim_), static_cast<std::size_t>(in_dim_)});
  b_ = Tensor({static_cast<std::size_t>(out_dim_)});
  gw_ = Tensor(w_.shape());
  gb_ = Tensor(b_.shape());
}

void Linear::init(Rng& rng) {
  const double std = std::sqrt(1.0 / in_dim_);
  for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = rng.normal(0.0, std);
  b_.zero();
}

void Linear::forward(const Tensor& in, Tensor& out) {
  PGDS_CHECK_ARG(in.rank() == 2 && static_cast<int>(in.dim(1)) == in_dim_, "linear ", name_,
                 ": expected (N,", in_dim_, ") input");
  trace::record(name_);
  const int n = static_cast<int>(in.dim(0));
  out = Tensor({in.dim(0), static_cast<std::size_t>(out_dim_)});
  kernels::linear_forward(in.data(), w_.data(), b_.data(), out.data(), n, in_dim_, out_dim_);
  cached_in_ = in;
}

void Linear::backward(const Tensor& dout, Tensor* din) {
  PGDS_CHECK_STATE(!cached_in_.empty(), "linear ", name_, ": backward before forward");
  const int n = static_cast<int>(cached_in_.dim(0));
  kernels::linear_backward_params(cached_in_.data(), dout.data(), gw_.data(), gb_.data(), n,
                                  in_dim_, out_dim_);
  if (din) {
    Tensor scratch(cached_in_.shape());
    kernels::linear_backward_input(dout.data(), w_.data(), scratch.data(), n, in_dim_, out_dim_);
    add_into(*din, scratch);
  }
}

void Linear::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".w", &w_, &gw_});
  out.push_back({name_ + ".b", &b_, &gb_});
}

void ReLU::forward(const Tensor& in, Tensor& out) {
  trace::record(name_);
  if (!out.same_shape(in)) out = Tensor(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  cached_out_ = out;
}

void ReLU::backward(const Tensor& dout, Tensor* din) {
  PGDS_CHECK_STATE(!cached_out_.empty(), "relu ", name_, ": backward before forward");
  if (!din) return;
  for (std::size_t i = 0; i < dout.size(); ++i)
    if (cached_out_[i] > 0.0) (*din)[i] += dout[i];
}

void GlobalAvgPool::forward(const Tensor& in, Tensor& out) {
  PGDS_CHECK_ARG(in.rank() == 4, "gap ", name_, ": expected (N,H,W,C) input");
  trace::record(name_);
  const int n = static_cast<int>(in.dim(0));
  const int hw = static_cast<int>(in.dim(1) * in.dim(2));
  const int c = static_cast<int>(in.dim(3));
  out = Tensor({in.dim(0), in.dim(3)});
  kernels::global_avg_pool(in.data(), out.data(), n, hw, c);
  cached_in_shape_ = in.shape();
}

void GlobalAvgPool::backward(const Tensor& dout, Tensor* din) {
  PGDS_CHECK_STATE(!cached_in_shape_.empty(), "gap ", name_, ": backward before forward");
  if (!din) return;
  const int n = static_cast<int>(cached_in_shape_[0]);
  const int hw = static_cast<int>(cached_in_shape_[1] * cached_in_shape_[2]);
  const int c = static_cast<int>(cached_in_shape_[3]);
  Tensor scratch(cached_in_shape_);
  kernels::global_avg_pool_backward(dout.data(), scratch.data(), n, hw, c);
  add_into(*din, scratch);
}

}  // namespace pgds
