#include "pgds/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pgds/kernels.hpp"
#include "pgds/optim.hpp"
#include "pgds/png_io.hpp"
#include "pgds/rng.hpp"

namespace pgds {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  PGDS_CHECK_ARG(dst.same_shape(src), "gradient shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::string stage_name(int i, const char* part) {
  return "human.s" + std::to_string(i) + "." + part;
}

}  // namespace

HumanEncoder::HumanEncoder(const std::vector<int>& channels, int embedding_dim)
    : channels_([&channels] {
        PGDS_CHECK_ARG(channels.size() == 5, "human encoder needs 5 channel widths");
        return channels;
      }()),
      embedding_dim_(embedding_dim), gap_("human.gap"),
      head_("human.head", channels.at(4), embedding_dim) {
  PGDS_CHECK_ARG(embedding_dim_ > 0, "human encoder embedding dim must be positive");
  for (int i = 0; i < 5; ++i) {
    const int in_c = i == 0 ? 3 : channels_[static_cast<std::size_t>(i - 1)];
    const int out_c = channels_[static_cast<std::size_t>(i)];
    auto& st = stages_[static_cast<std::size_t>(i)];
    st.conv1 = std::make_unique<Conv2d>(stage_name(i, "conv1"), in_c, out_c, 3, 3, 2, 1);
    st.bn1 = std::make_unique<BatchNorm>(stage_name(i, "bn1"), out_c);
    st.relu1 = std::make_unique<ReLU>(stage_name(i, "relu1"));
    st.conv2 = std::make_unique<Conv2d>(stage_name(i, "conv2"), out_c, out_c, 3, 3, 1, 1);
    st.bn2 = std::make_unique<BatchNorm>(stage_name(i, "bn2"), out_c);
    st.relu2 = std::make_unique<ReLU>(stage_name(i, "relu2"));
  }
}

void HumanEncoder::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "human-init"));
  for (auto& st : stages_) {
    st.conv1->init(rng);
    st.bn1->init();
    st.conv2->init(rng);
    st.bn2->init();
  }
  head_.init(rng);
}

MultiScaleFeatureSet HumanEncoder::forward(const Tensor& images, bool train) {
  PGDS_CHECK_ARG(images.rank() == 4 && images.dim(3) == 3,
                 "human encoder expects (N,H,W,3) input");
  PGDS_CHECK_ARG(images.dim(1) % 32 == 0 && images.dim(2) % 32 == 0,
                 "human encoder input dims must be multiples of 32, got ", images.dim(1), "x",
                 images.dim(2));
  cached_input_ = images;
  const Tensor* x = &cached_input_;
  for (int i = 0; i < 5; ++i) {
    auto& st = stages_[static_cast<std::size_t>(i)];
    st.conv1->forward(*x, st.t1);
    st.bn1->forward(st.t1, st.t2, train);
    st.relu1->forward(st.t2, st.t3);
    st.conv2->forward(st.t3, st.t4);
    st.bn2->forward(st.t4, st.t5, train);
    st.relu2->forward(st.t5, cached_out_.stages[static_cast<std::size_t>(i)]);
    x = &cached_out_.stages[static_cast<std::size_t>(i)];
  }
  gap_.forward(cached_out_.stages[4], cached_out_.pooled);
  head_.forward(cached_out_.pooled, cached_out_.embedding);
  have_forward_ = true;
  return cached_out_;
}

void HumanEncoder::backward(const Tensor& d_embedding, const std::array<Tensor, 5>* d_stage_extra,
                            Tensor* d_input) {
  PGDS_CHECK_STATE(have_forward_, "human encoder backward before forward");
  Tensor d_pooled(cached_out_.pooled.shape());
  head_.backward(d_embedding, &d_pooled);
  Tensor d_stage(cached_out_.stages[4].shape());
  gap_.backward(d_pooled, &d_stage);

  for (int i = 4; i >= 0; --i) {
    auto& st = stages_[static_cast<std::size_t>(i)];
    if (d_stage_extra && !(*d_stage_extra)[static_cast<std::size_t>(i)].empty())
      add_into(d_stage, (*d_stage_extra)[static_cast<std::size_t>(i)]);
    Tensor d_t5(st.t5.shape());
    st.relu2->backward(d_stage, &d_t5);
    Tensor d_t4(st.t4.shape());
    st.bn2->backward(d_t5, &d_t4);
    Tensor d_t3(st.t3.shape());
    st.conv2->backward(d_t4, &d_t3);
    Tensor d_t2(st.t2.shape());
    st.relu1->backward(d_t3, &d_t2);
    Tensor d_t1(st.t1.shape());
    st.bn1->backward(d_t2, &d_t1);
    if (i > 0) {
      Tensor d_prev(cached_out_.stages[static_cast<std::size_t>(i - 1)].shape());
      st.conv1->backward(d_t1, &d_prev);
      d_stage = std::move(d_prev);
    } else {
      st.conv1->backward(d_t1, d_input);
    }
  }
}

std::vector<ParamRef> HumanEncoder::params() {
  std::vector<ParamRef> out;
  for (auto& st : stages_) {
    st.conv1->collect(out);
    st.bn1->collect(out);
    st.conv2->collect(out);
    st.bn2->collect(out);
  }
  head_.collect(out);
  return out;
}

std::vector<ParamRef> HumanEncoder::buffers() {
  std::vector<ParamRef> out;
  for (auto& st : stages_) {
    st.bn1->collect_buffers(out);
    st.bn2->collect_buffers(out);
  }
  return out;
}

PoseEncoder::PoseEncoder(int joints, int embedding_dim)
    : joints_(joints), embedding_dim_(embedding_dim),
      c1_("pose.c1", 3, 12, 3, 3, 2, 1),
      c2_("pose.c2", 12, 16, 5, 5, 2, 2),
      c3_("pose.c3", 16, 16, 5, 5, 1, 2),
      c4_("pose.c4", 16, joints, 1, 1, 1, 0),
      r1_("pose.r1"), r2_("pose.r2"), r3_("pose.r3"),
      fc_("pose.fc", 3 * joints, embedding_dim) {
  PGDS_CHECK_ARG(joints >= 5, "pose encoder needs at least 5 joints");
  PGDS_CHECK_ARG(embedding_dim > 0, "pose embedding dim must be positive");
}

void PoseEncoder::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "pose-init"));
  c1_.init(rng);
  c2_.init(rng);
  c3_.init(rng);
  c4_.init(rng);
  fc_.init(rng);
}

Tensor PoseEncoder::forward_stack(const Tensor& images) {
  PGDS_CHECK_ARG(images.rank() == 4 && images.dim(3) == 3,
                 "pose encoder expects (N,H,W,3) input");
  PGDS_CHECK_ARG(images.dim(1) % 4 == 0 && images.dim(2) % 4 == 0,
                 "pose encoder input dims must be multiples of 4");
  c1_.forward(images, t1_);
  r1_.forward(t1_, t2_);
  c2_.forward(t2_, t3_);
  r2_.forward(t3_, t4_);
  c3_.forward(t4_, t5_);
  r3_.forward(t5_, t6_);
  Tensor conf;
  c4_.forward(t6_, conf);
  return conf;
}

Tensor PoseEncoder::predict_confidence(const Tensor& images) {
  PGDS_CHECK_STATE(!frozen_, "pose encoder is frozen; use pose_forward");
  return forward_stack(images);
}

void PoseEncoder::backward_confidence(const Tensor& d_conf) {
  PGDS_CHECK_STATE(!frozen_, "pose encoder is frozen; no gradients may flow");
  Tensor d_t6(t6_.shape());
  c4_.backward(d_conf, &d_t6);
  Tensor d_t5(t5_.shape());
  r3_.backward(d_t6, &d_t5);
  Tensor d_t4(t4_.shape());
  c3_.backward(d_t5, &d_t4);
  Tensor d_t3(t3_.shape());
  r2_.backward(d_t4, &d_t3);
  Tensor d_t2(t2_.shape());
  c2_.backward(d_t3, &d_t2);
  Tensor d_t1(t1_.shape());
  r1_.backward(d_t2, &d_t1);
  c1_.backward(d_t1, nullptr);
}

Tensor pose_spatial_moments(const Tensor& conf) {
  PGDS_CHECK_ARG(conf.rank() == 4, "spatial moments expect a (N, H, W, J) confidence stack");
  const std::size_t n = conf.dim(0), h = conf.dim(1), w = conf.dim(2), joints = conf.dim(3);
  PGDS_CHECK_ARG(h >= 2 && w >= 2, "confidence maps too small for centroids");
  Tensor rows({n, 3 * joints});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < joints; ++j) {
      double mass = 0.0, mx = 0.0, my = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          // Regression output can dip below zero; only positive evidence
          // should pull on the centroid.
          const double c = std::max(conf[((b * h + y) * w + x) * joints + j], 0.0);
          mass += c;
          mx += c * static_cast<double>(x);
          my += c * static_cast<double>(y);
        }
      }
      const double denom = mass + 1e-12;
      rows[b * 3 * joints + 3 * j] = mass / static_cast<double>(h * w);
      rows[b * 3 * joints + 3 * j + 1] = mx / denom / static_cast<double>(w - 1);
      rows[b * 3 * joints + 3 * j + 2] = my / denom / static_cast<double>(h - 1);
    }
  }
  return rows;
}

void PoseEncoder::pose_forward(const Tensor& images, Tensor& confidence, Tensor& embedding) {
  PGDS_CHECK_STATE(frozen_, "pose encoder must be pretrained and frozen before pose_forward");
  confidence = forward_stack(images);
  const Tensor moments = pose_spatial_moments(confidence);
  fc_.forward(moments, embedding);
}

void PoseEncoder::calibrate(const Tensor& moment_rows, std::uint64_t seed) {
  const int width = 3 * joints_;
  PGDS_CHECK_ARG(moment_rows.rank() == 2 && static_cast<int>(moment_rows.dim(1)) == width,
                 "calibration rows must be (N, 3J)");
  const std::size_t n = moment_rows.dim(0);
  PGDS_CHECK_ARG(n >= 2, "calibration needs at least 2 rows");

  std::vector<double> mean(static_cast<std::size_t>(width), 0.0);
  std::vector<double> var(static_cast<std::size_t>(width), 0.0);
  kernels::channel_stats(moment_rows.data(), n, width, mean.data(), var.data());

  // Standardize each moment channel, mix across D logits with a fixed random
  // projection of unit row variance, and scale so logits have spread ~2:
  // enough contrast for the temperature softmax without saturating it.
  constexpr double kLogitScale = 2.0;
  Rng rng(derive_seed(seed, "pose-fc"));
  Tensor& w = fc_.weight();
  Tensor& b = fc_.bias();
  const double col_scale = 1.0 / std::sqrt(static_cast<double>(width));
  for (int d = 0; d < embedding_dim_; ++d) {
    double bias = 0.0;
    for (int j = 0; j < width; ++j) {
      const double sigma = std::sqrt(std::max(var[static_cast<std::size_t>(j)], 1e-12));
      const double wij = rng.normal() * col_scale * kLogitScale / sigma;
      w[static_cast<std::size_t>(d) * width + j] = wij;
      bias -= wij * mean[static_cast<std::size_t>(j)];
    }
    b[static_cast<std::size_t>(d)] = bias;
  }
}

std::vector<ParamRef> PoseEncoder::trainable_params() {
  PGDS_CHECK_STATE(!frozen_, "pose encoder is frozen; its parameters cannot be updated");
  std::vector<ParamRef> out;
  c1_.collect(out);
  c2_.collect(out);
  c3_.collect(out);
  c4_.collect(out);
  return out;
}

std::vector<ParamRef> PoseEncoder::all_params() {
  std::vector<ParamRef> out;
  c1_.collect(out);
  c2_.collect(out);
  c3_.collect(out);
  c4_.collect(out);
  fc_.collect(out);
  return out;
}

std::uint64_t PoseEncoder::param_hash() const {
  auto* self = const_cast<PoseEncoder*>(this);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : self->all_params()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value->data());
    for (std::size_t i = 0; i < p.value->size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

double pose_confidence_mse(PoseEncoder& enc, const Dataset& ds, const std::vector<int>& indices) {
  PGDS_CHECK_ARG(!indices.empty(), "confidence MSE needs at least one record");
  double total = 0.0;
  std::size_t count = 0;
  for (int idx : indices) {
    const auto& rec = ds.records[static_cast<std::size_t>(idx)];
    const Tensor img = read_png(image_abs_path(ds, rec));
    Tensor batch({1, img.dim(0), img.dim(1), 3});
    std::copy(img.data(), img.data() + img.size(), batch.data());
    Tensor conf;
    if (enc.frozen()) {
      Tensor emb;
      enc.pose_forward(batch, conf, emb);
    } else {
      conf = enc.predict_confidence(batch);
    }
    const Tensor target = read_heatmap_file(heatmap_abs_path(ds, rec));
    PGDS_CHECK_ARG(conf.size() == target.size(), "confidence / heatmap shape mismatch for ",
                   rec.image_path);
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const double diff = conf[i] - target[i];
      total += diff * diff;
    }
    count += conf.size();
  }
  return total / static_cast<double>(count);
}

PosePretrainReport pretrain_pose_encoder(PoseEncoder& enc, const Dataset& ds, int epochs,
                                         std::uint64_t seed) {
  PGDS_CHECK_ARG(epochs >= 1, "pose pretraining needs at least 1 epoch");
  PGDS_CHECK_STATE(!enc.frozen(), "pose encoder is already frozen");
  auto train_idx = indices_with_split(ds.records, Split::train);
  PGDS_CHECK_ARG(static_cast<int>(train_idx.size()) >= 4,
                 "pose pretraining needs at least 4 train images");
  for (int idx : train_idx)
    PGDS_CHECK_ARG(std::filesystem::exists(
                       heatmap_abs_path(ds, ds.records[static_cast<std::size_t>(idx)])),
                   "dataset lacks keypoint heatmaps (missing ",
                   heatmap_abs_path(ds, ds.records[static_cast<std::size_t>(idx)]), ")");

  Rng split_rng(derive_seed(seed, "pose-split"));
  split_rng.shuffle(train_idx);
  const std::size_t n_val = std::max<std::size_t>(1, train_idx.size() / 10);
  std::vector<int> val_idx(train_idx.end() - static_cast<std::ptrdiff_t>(n_val), train_idx.end());
  std::vector<int> fit_idx(train_idx.begin(), train_idx.end() - static_cast<std::ptrdiff_t>(n_val));

  // Preload: the set is small and decoding PNGs once per epoch would dominate.
  std::vector<Tensor> images(fit_idx.size()), targets(fit_idx.size());
  for (std::size_t i = 0; i < fit_idx.size(); ++i) {
    const auto& rec = ds.records[static_cast<std::size_t>(fit_idx[i])];
    images[i] = read_png(image_abs_path(ds, rec));
    targets[i] = read_heatmap_file(heatmap_abs_path(ds, rec));
  }

  AdamW opt(enc.trainable_params(), 2e-3, 1e-4);
  const int batch = 16;
  const int h = static_cast<int>(images[0].dim(0)), w = static_cast<int>(images[0].dim(1));

  PosePretrainReport report;
  report.epochs = epochs;
  std::vector<int> order(fit_idx.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int e = 0; e < epochs; ++e) {
    Rng erng(derive_seed(seed, "pose-epoch", e));
    erng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t bsz = std::min<std::size_t>(batch, order.size() - start);
      Tensor in({bsz, static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
      std::vector<const Tensor*> tgt(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const auto& img = images[static_cast<std::size_t>(order[start + b])];
        std::copy(img.data(), img.data() + img.size(), in.data() + b * img.size());
        tgt[b] = &targets[static_cast<std::size_t>(order[start + b])];
      }
      Tensor conf = enc.predict_confidence(in);
      const std::size_t per = conf.size() / bsz;
      Tensor d_conf(conf.shape());
      double loss = 0.0;
      for (std::size_t b = 0; b < bsz; ++b) {
        const Tensor& t = *tgt[b];
        PGDS_CHECK_ARG(t.size() == per, "heatmap resolution mismatch during pretraining");
        for (std::size_t i = 0; i < per; ++i) {
          const double diff = conf[b * per + i] - t[i];
          loss += diff * diff;
          d_conf[b * per + i] = 2.0 * diff / static_cast<double>(conf.size());
        }
      }
      loss /= static_cast<double>(conf.size());
      epoch_loss += loss * static_cast<double>(conf.size());
      epoch_count += conf.size();
      opt.zero_grad();
      enc.backward_confidence(d_conf);
      opt.step();
    }
    const double mean_loss = epoch_loss / static_cast<double>(epoch_count);
    if (e == 0) report.first_epoch_train_mse = mean_loss;
    report.last_epoch_train_mse = mean_loss;
  }

  report.held_out_mse = pose_confidence_mse(enc, ds, val_idx);

  // Calibration statistics come from the full train split.
  const std::size_t row_width = 3 * static_cast<std::size_t>(enc.joints());
  Tensor moment_rows({train_idx.size(), row_width});
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    const auto& rec = ds.records[static_cast<std::size_t>(train_idx[i])];
    const Tensor img = read_png(image_abs_path(ds, rec));
    Tensor batch1({1, img.dim(0), img.dim(1), 3});
    std::copy(img.data(), img.data() + img.size(), batch1.data());
    const Tensor row = pose_spatial_moments(enc.predict_confidence(batch1));
    std::copy(row.data(), row.data() + row_width, moment_rows.data() + i * row_width);
  }
  enc.calibrate(moment_rows, seed);
  enc.freeze();
  return report;
}

}  // namespace pgds
