#include "pgds/php.hpp"

#include "pgds/common.hpp"

namespace pgds {

namespace {
std::string php_name(int stage, const char* part) {
  return "php.s" + std::to_string(stage) + "." + part;
}
}  // namespace

Projector::Projector(int stage, int in_channels, int embedding_dim)
    : stage_(stage), in_channels_(in_channels), embedding_dim_(embedding_dim),
      gap_(php_name(stage, "gap")),
      linear_(php_name(stage, "linear"), in_channels, embedding_dim),
      bn_(php_name(stage, "bn"), embedding_dim),
      relu_(php_name(stage, "relu")) {
  PGDS_CHECK_ARG(stage >= 0 && stage <= 4, "projector stage must be in 0..4, got ", stage);
}

void Projector::init(Rng& rng) {
  linear_.init(rng);
  bn_.init();
}

Tensor Projector::forward(const Tensor& stage_feature, bool train) {
  PGDS_CHECK_ARG(stage_feature.rank() == 4 &&
                     static_cast<int>(stage_feature.dim(3)) == in_channels_,
                 "projector for stage ", stage_, " expects ", in_channels_, " channels, got ",
                 stage_feature.rank() == 4 ? stage_feature.dim(3) : 0);
  in_shape_ = stage_feature.shape();
  gap_.forward(stage_feature, t1_);
  linear_.forward(t1_, t2_);
  bn_.forward(t2_, t3_, train);
  Tensor out;
  relu_.forward(t3_, out);
  return out;
}

Tensor Projector::backward(const Tensor& d_out) {
  PGDS_CHECK_STATE(!in_shape_.empty(), "projector backward before forward");
  Tensor d_t3(t3_.shape());
  relu_.backward(d_out, &d_t3);
  Tensor d_t2(t2_.shape());
  bn_.backward(d_t3, &d_t2);
  Tensor d_t1(t1_.shape());
  linear_.backward(d_t2, &d_t1);
  Tensor d_stage(in_shape_);
  gap_.backward(d_t1, &d_stage);
  return d_stage;
}

std::vector<ParamRef> Projector::params() {
  std::vector<ParamRef> out;
  linear_.collect(out);
  bn_.collect(out);
  return out;
}

std::vector<ParamRef> Projector::buffers() {
  std::vector<ParamRef> out;
  bn_.collect_buffers(out);
  return out;
}

std::size_t projector_param_count(int in_channels, int embedding_dim) {
  PGDS_CHECK_ARG(in_channels > 0, "projector channel count must be positive, got ", in_channels);
  PGDS_CHECK_ARG(embedding_dim > 0, "projector embedding dim must be positive, got ",
                 embedding_dim);
  const auto c = static_cast<std::size_t>(in_channels);
  const auto d = static_cast<std::size_t>(embedding_dim);
  return c * d + d + 2 * d;
}

}  // namespace pgds
