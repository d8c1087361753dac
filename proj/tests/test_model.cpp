#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pgds/checkpoint.hpp"
#include "pgds/common.hpp"
#include "pgds/datagen.hpp"
#include "pgds/encoders.hpp"
#include "pgds/optim.hpp"
#include "pgds/php.hpp"
#include "pgds/rng.hpp"

using namespace pgds;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(Rng& r, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.uniform(lo, hi);
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pgds_model_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const Dataset& tiny_dataset() {
  static Dataset ds = [] {
    const fs::path dir = fresh_dir("data");
    GenOptions opt;
    opt.n_identities = 4;
    opt.cameras = 2;
    opt.clothes_per_identity = 2;
    opt.images_per_combination = 2;
    opt.seed = 404;
    generate_dataset(opt, dir.string());
    return load_dataset(dir.string());
  }();
  return ds;
}

}  // namespace

TEST_CASE("batch norm train mode standardizes per channel") {
  Rng r(1);
  BatchNorm bn("bn", 3);
  bn.init();
  const Tensor in = random_tensor(r, {40, 3}, -2.0, 5.0);
  Tensor out;
  bn.forward(in, out, true);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 40; ++i) mean += out[i * 3 + static_cast<std::size_t>(c)];
    mean /= 40.0;
    for (std::size_t i = 0; i < 40; ++i) {
      const double d = out[i * 3 + static_cast<std::size_t>(c)] - mean;
      var += d * d;
    }
    var /= 40.0;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("batch norm eval mode uses running statistics and is idempotent") {
  Rng r(2);
  BatchNorm bn("bn", 2);
  bn.init();
  Tensor out;
  for (int i = 0; i < 50; ++i) {
    const Tensor in = random_tensor(r, {16, 2}, 1.0, 3.0);
    bn.forward(in, out, true);
  }
  const Tensor probe = random_tensor(r, {4, 2}, 1.0, 3.0);
  Tensor e1, e2;
  bn.forward(probe, e1, false);
  bn.forward(probe, e2, false);
  CHECK(bitwise_equal(e1, e2));
  // inputs near the running mean map near zero
  Tensor centered({1, 2});
  centered[0] = 2.0;
  centered[1] = 2.0;
  Tensor ce;
  bn.forward(centered, ce, false);
  CHECK(std::abs(ce[0]) < 0.2);
  CHECK(std::abs(ce[1]) < 0.2);
}

TEST_CASE("batch norm backward matches finite differences in train mode") {
  Rng r(3);
  BatchNorm bn("bn", 2);
  bn.init();
  // non-default affine so the gamma path is exercised
  std::vector<ParamRef> ps;
  bn.collect(ps);
  for (auto& p : ps)
    for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = r.uniform(0.5, 1.5);
  const Tensor in = random_tensor(r, {6, 2});
  const Tensor cvec = random_tensor(r, {6, 2});
  auto loss = [&](const Tensor& x) {
    Tensor out;
    bn.forward(out.empty() ? x : x, out, true);
    return dot(cvec, out);
  };
  Tensor out;
  bn.forward(in, out, true);
  for (auto& p : ps) p.grad->zero();
  Tensor din(in.shape());
  bn.backward(cvec, &din);
  const double h = 1e-6;
  for (std::size_t i = 0; i < in.size(); ++i) {
    Tensor xp = in, xm = in;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    CHECK(din[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
  // parameter grads against FD
  for (auto& p : ps) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double up = loss(in);
      (*p.value)[i] = keep - h;
      const double dn = loss(in);
      (*p.value)[i] = keep;
      CHECK((*p.grad)[i] == doctest::Approx((up - dn) / (2.0 * h)).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("relu backward gates on the cached output") {
  ReLU relu("r");
  Tensor in({1, 4});
  in[0] = -1.0;
  in[1] = 0.0;
  in[2] = 0.5;
  in[3] = 2.0;
  Tensor out;
  relu.forward(in, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.5);
  CHECK(out[3] == 2.0);
  Tensor dout({1, 4});
  dout.fill(1.0);
  Tensor din({1, 4});
  relu.backward(dout, &din);
  CHECK(din[0] == 0.0);
  CHECK(din[1] == 0.0);
  CHECK(din[2] == 1.0);
  CHECK(din[3] == 1.0);
}

TEST_CASE("execution trace records layer names while active") {
  Rng r(5);
  Linear lin("probe_linear", 3, 2);
  lin.init(r);
  const Tensor in = random_tensor(r, {2, 3});
  Tensor out;
  trace::begin();
  CHECK(trace::active());
  lin.forward(in, out);
  const auto names = trace::end();
  CHECK(!trace::active());
  REQUIRE(names.size() == 1);
  CHECK(names[0] == "probe_linear");
  // inactive collection records nothing and end() without begin() is empty
  lin.forward(in, out);
  trace::begin();
  CHECK(trace::end().empty());
}

TEST_CASE("human encoder obeys the multi-scale shape contract") {
  const std::vector<int> channels = {2, 3, 4, 5, 6};
  HumanEncoder enc(channels, 7);
  enc.init(11);
  Rng r(6);
  const Tensor images = random_tensor(r, {2, 96, 32, 3}, 0.0, 1.0);
  MultiScaleFeatureSet f = enc.forward(images, false);
  for (int i = 0; i < 5; ++i) {
    const std::size_t hh = 96u >> (i + 1), ww = 32u >> (i + 1);
    CHECK(f.stages[static_cast<std::size_t>(i)].shape() ==
          std::vector<std::size_t>({2, hh, ww, static_cast<std::size_t>(channels[static_cast<std::size_t>(i)])}));
  }
  CHECK(f.pooled.shape() == std::vector<std::size_t>({2, 6}));
  CHECK(f.embedding.shape() == std::vector<std::size_t>({2, 7}));
  // eval forward is a pure function
  MultiScaleFeatureSet g = enc.forward(images, false);
  CHECK(bitwise_equal(f.embedding, g.embedding));
  // init is seed-deterministic
  HumanEncoder enc2(channels, 7);
  enc2.init(11);
  MultiScaleFeatureSet h = enc2.forward(images, false);
  CHECK(bitwise_equal(f.embedding, h.embedding));
  HumanEncoder enc3(channels, 7);
  enc3.init(12);
  MultiScaleFeatureSet k = enc3.forward(images, false);
  CHECK(!bitwise_equal(f.embedding, k.embedding));
  // bad input shapes are rejected
  CHECK_THROWS_AS(enc.forward(random_tensor(r, {1, 50, 32, 3}), false), DomainError);
  CHECK_THROWS_AS(HumanEncoder(std::vector<int>{2, 3}, 7), DomainError);
}

TEST_CASE("human encoder backward matches finite differences on sampled params") {
  const std::vector<int> channels = {2, 2, 3, 3, 4};
  HumanEncoder enc(channels, 3);
  enc.init(21);
  Rng r(7);
  const Tensor images = random_tensor(r, {2, 32, 32, 3}, 0.0, 1.0);
  const Tensor cvec = random_tensor(r, {2, 3});
  auto loss = [&]() {
    MultiScaleFeatureSet f = enc.forward(images, true);
    return dot(cvec, f.embedding);
  };
  (void)loss();
  auto ps = enc.params();
  for (auto& p : ps) p.grad->zero();
  enc.backward(cvec, nullptr, nullptr);
  Rng pick(8);
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t k = 0; k < ps.size(); k += 3) {
    auto& p = ps[k];
    const std::size_t i = pick.uniform_index(p.value->size());
    const double keep = (*p.value)[i];
    (*p.value)[i] = keep + h;
    const double up = loss();
    (*p.value)[i] = keep - h;
    const double dn = loss();
    (*p.value)[i] = keep;
    const double fd = (up - dn) / (2.0 * h);
    CHECK((*p.grad)[i] == doctest::Approx(fd).epsilon(5e-4).scale(1e-2));
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("stage-extra gradients reach only the stages at or below the tap") {
  const std::vector<int> channels = {2, 2, 3, 3, 4};
  HumanEncoder enc(channels, 3);
  enc.init(31);
  Rng r(9);
  const Tensor images = random_tensor(r, {2, 32, 32, 3}, 0.0, 1.0);
  MultiScaleFeatureSet f = enc.forward(images, true);
  auto ps = enc.params();
  for (auto& p : ps) p.grad->zero();
  std::array<Tensor, 5> extra{};
  extra[2] = Tensor(f.stages[2].shape());
  extra[2].fill(0.01);
  Tensor zero_demb(f.embedding.shape());
  enc.backward(zero_demb, &extra, nullptr);
  double below = 0.0, above = 0.0, head = 0.0;
  for (auto& p : ps) {
    double g2 = 0.0;
    for (std::size_t i = 0; i < p.grad->size(); ++i) g2 += (*p.grad)[i] * (*p.grad)[i];
    const bool is_head = p.name.find("head") != std::string::npos;
    const bool late = p.name.find(".s3.") != std::string::npos ||
                      p.name.find(".s4.") != std::string::npos;
    if (is_head) head += g2;
    else if (late) above += g2;
    else below += g2;
  }
  CHECK(below > 0.0);
  CHECK(above == 0.0);
  CHECK(head == 0.0);
}

TEST_CASE("human encoder accumulates pixel gradients on demand") {
  const std::vector<int> channels = {2, 2, 3, 3, 4};
  HumanEncoder enc(channels, 3);
  enc.init(41);
  Rng r(10);
  const Tensor images = random_tensor(r, {1, 32, 32, 3}, 0.0, 1.0);
  MultiScaleFeatureSet f = enc.forward(images, false);
  Tensor demb(f.embedding.shape());
  demb.fill(1.0);
  Tensor dinput(images.shape());
  enc.backward(demb, nullptr, &dinput);
  double mag = 0.0;
  for (std::size_t i = 0; i < dinput.size(); ++i) mag += std::abs(dinput[i]);
  CHECK(mag > 0.0);
  CHECK(std::isfinite(mag));
}

TEST_CASE("projector maps a stage feature to a nonnegative D-vector") {
  Projector proj(2, 5, 8);
  Rng r(11);
  proj.init(r);
  const Tensor feat = random_tensor(r, {3, 6, 4, 5});
  const Tensor out = proj.forward(feat, true);
  CHECK(out.shape() == std::vector<std::size_t>({3, 8}));
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] >= 0.0);
  CHECK(proj.stage() == 2);
  CHECK(proj.in_channels() == 5);
}

TEST_CASE("projector at init maps constant feature maps to the zero vector") {
  Projector proj(1, 4, 6);
  Rng r(12);
  proj.init(r);
  Tensor feat({2, 3, 3, 4});
  feat.fill(0.7);
  const Tensor out = proj.forward(feat, true);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i]) < 1e-9);
}

TEST_CASE("projector parameter count matches the closed form") {
  CHECK(projector_param_count(4, 6) == 4u * 6u + 6u + 2u * 6u);
  Projector proj(0, 4, 6);
  std::size_t total = 0;
  auto ps = proj.params();
  for (auto& p : ps) total += p.value->size();
  CHECK(total == projector_param_count(4, 6));
  // buffers (running stats) are not trainable parameters
  std::vector<ParamRef> bufs = proj.buffers();
  CHECK(!bufs.empty());
  for (auto& b : bufs) CHECK(b.grad == nullptr);
}

TEST_CASE("projector backward matches finite differences") {
  Projector proj(1, 3, 4);
  Rng r(13);
  proj.init(r);
  auto ps = proj.params();
  // move off the init point so BN gamma/beta and ReLU gates are generic
  for (auto& p : ps)
    for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] += r.uniform(0.1, 0.6);
  const Tensor feat = random_tensor(r, {4, 2, 2, 3});
  const Tensor cvec = random_tensor(r, {4, 4});
  auto loss = [&](const Tensor& x) { return dot(cvec, proj.forward(x, true)); };
  (void)proj.forward(feat, true);
  for (auto& p : ps) p.grad->zero();
  const Tensor dfeat = proj.backward(cvec);
  const double h = 1e-6;
  for (std::size_t i = 0; i < feat.size(); i += 5) {
    Tensor xp = feat, xm = feat;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    CHECK(dfeat[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
  for (auto& p : ps) {
    for (std::size_t i = 0; i < p.value->size(); i += 3) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double up = loss(feat);
      (*p.value)[i] = keep - h;
      const double dn = loss(feat);
      (*p.value)[i] = keep;
      CHECK((*p.grad)[i] == doctest::Approx((up - dn) / (2.0 * h)).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("spatial moments read mass and centroid per joint") {
  // joint 0: single spike at (y=3, x=5); joint 1: two equal spikes
  Tensor conf({1, 6, 8, 2});
  conf[(3 * 8 + 5) * 2 + 0] = 0.8;
  conf[(1 * 8 + 2) * 2 + 1] = 0.5;
  conf[(5 * 8 + 6) * 2 + 1] = 0.5;
  const Tensor rows = pose_spatial_moments(conf);
  CHECK(rows.shape() == std::vector<std::size_t>({1, 6}));
  CHECK(rows[0] == doctest::Approx(0.8 / 48.0).epsilon(1e-12));
  CHECK(rows[1] == doctest::Approx(5.0 / 7.0).epsilon(1e-9));
  CHECK(rows[2] == doctest::Approx(3.0 / 5.0).epsilon(1e-9));
  CHECK(rows[3] == doctest::Approx(1.0 / 48.0).epsilon(1e-12));
  CHECK(rows[4] == doctest::Approx((0.5 * 2 + 0.5 * 6) / 1.0 / 7.0).epsilon(1e-9));
  CHECK(rows[5] == doctest::Approx((0.5 * 1 + 0.5 * 5) / 1.0 / 5.0).epsilon(1e-9));

  // negative responses carry no evidence and cannot drag the centroid
  Tensor neg({1, 6, 8, 1});
  neg.fill(-2.0);
  neg[(2 * 8 + 4) * 1] = 1.0;
  const Tensor nrows = pose_spatial_moments(neg);
  CHECK(nrows[0] == doctest::Approx(1.0 / 48.0).epsilon(1e-12));
  CHECK(nrows[1] == doctest::Approx(4.0 / 7.0).epsilon(1e-9));
  CHECK(nrows[2] == doctest::Approx(2.0 / 5.0).epsilon(1e-9));

  // an all-zero map yields zero mass and a finite centroid
  const Tensor zrows = pose_spatial_moments(Tensor({1, 4, 4, 1}));
  CHECK(zrows[0] == 0.0);
  CHECK(std::isfinite(zrows[1]));
  CHECK(std::isfinite(zrows[2]));

  CHECK_THROWS_AS(pose_spatial_moments(Tensor({4, 4, 1})), DomainError);
}

TEST_CASE("pose encoder confidence stack trains, calibrates and freezes") {
  const Dataset& ds = tiny_dataset();
  PoseEncoder enc(kNumJoints, 16);
  enc.init(51);
  Rng r(14);
  const Tensor images = random_tensor(r, {2, 96, 32, 3}, 0.0, 1.0);
  const Tensor conf = enc.predict_confidence(images);
  CHECK(conf.shape() ==
        std::vector<std::size_t>({2, 24, 8, static_cast<std::size_t>(kNumJoints)}));
  // unfrozen: inference contract rejected, training contract allowed
  Tensor c, e;
  CHECK_THROWS_AS(enc.pose_forward(images, c, e), StateError);
  const PosePretrainReport report = pretrain_pose_encoder(enc, ds, 3, 51);
  CHECK(report.epochs == 3);
  CHECK(report.last_epoch_train_mse < report.first_epoch_train_mse);
  CHECK(std::isfinite(report.held_out_mse));
  CHECK(enc.frozen());
  // frozen: training contracts rejected, inference allowed
  CHECK_THROWS_AS(enc.predict_confidence(images), StateError);
  CHECK_THROWS_AS(enc.backward_confidence(conf), StateError);
  CHECK_THROWS_AS(enc.trainable_params(), StateError);
  enc.pose_forward(images, c, e);
  CHECK(c.shape() == conf.shape());
  CHECK(e.shape() == std::vector<std::size_t>({2, 16}));
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(std::isfinite(e[i]));
  // embeddings vary across images
  bool varies = false;
  for (int k = 0; k < 16; ++k) varies |= (std::abs(e[static_cast<std::size_t>(k)] - e[static_cast<std::size_t>(16 + k)]) > 1e-12);
  CHECK(varies);
  // frozen forward twice is bitwise identical
  Tensor c2, e2;
  enc.pose_forward(images, c2, e2);
  CHECK(bitwise_equal(e, e2));
}

TEST_CASE("pose encoder parameter hash tracks the weights") {
  PoseEncoder a(kNumJoints, 8), b(kNumJoints, 8);
  a.init(61);
  b.init(61);
  CHECK(a.param_hash() == b.param_hash());
  CHECK(a.param_hash() == a.param_hash());
  PoseEncoder c(kNumJoints, 8);
  c.init(62);
  CHECK(a.param_hash() != c.param_hash());
  // nudging one weight changes the hash
  auto ps = b.all_params();
  REQUIRE(!ps.empty());
  (*ps[0].value)[0] += 1e-9;
  CHECK(a.param_hash() != b.param_hash());
}

TEST_CASE("checkpoint container round-trips bitwise and rejects corruption") {
  const fs::path dir = fresh_dir("ckpt");
  const std::vector<int> channels = {2, 2, 3, 3, 4};
  HumanEncoder enc(channels, 5);
  enc.init(71);
  CheckpointData data;
  data.kind = 0;
  data.config_text = "[train]\nepochs = 3\n";
  data.seed = 99;
  data.epoch = 2;
  data.step = 46;
  data.pose_frozen = true;
  pack_params(enc.params(), data.tensors);
  pack_params(enc.buffers(), data.tensors);
  const std::string path = (dir / "model.bin").string();
  save_checkpoint(path, data);
  const CheckpointData back = load_checkpoint(path);
  CHECK(back.version == data.version);
  CHECK(back.kind == 0);
  CHECK(back.config_text == data.config_text);
  CHECK(back.seed == 99);
  CHECK(back.epoch == 2);
  CHECK(back.step == 46);
  CHECK(back.pose_frozen);
  REQUIRE(back.tensors.size() == data.tensors.size());

  HumanEncoder enc2(channels, 5);
  enc2.init(72);
  unpack_params(back, enc2.params());
  unpack_params(back, enc2.buffers());
  Rng r(15);
  const Tensor images = random_tensor(r, {1, 32, 32, 3}, 0.0, 1.0);
  const Tensor e1 = enc.forward(images, false).embedding;
  const Tensor e2 = enc2.forward(images, false).embedding;
  CHECK(bitwise_equal(e1, e2));

  // two saves of identical state are byte-identical
  const std::string path2 = (dir / "model2.bin").string();
  save_checkpoint(path2, data);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  CHECK(back.find("human.head.w") != nullptr);
  CHECK(back.find("no.such.tensor") == nullptr);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), IoError);
  {
    std::ofstream junk(dir / "junk.bin", std::ios::binary);
    junk << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "junk.bin").string()), IoError);
  // truncated file
  {
    std::ifstream in(path, std::ios::binary);
    std::string full((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir / "trunc.bin", std::ios::binary);
    out.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "trunc.bin").string()), IoError);
  // unpack with a missing tensor name
  HumanEncoder wider(std::vector<int>{3, 4, 5, 6, 7}, 5);
  wider.init(73);
  CHECK_THROWS_AS(unpack_params(back, wider.params()), IoError);
}

TEST_CASE("pose checkpoint preserves the frozen teacher exactly") {
  const Dataset& ds = tiny_dataset();
  const fs::path dir = fresh_dir("pose_ckpt");
  PoseEncoder enc(kNumJoints, 12);
  enc.init(81);
  pretrain_pose_encoder(enc, ds, 2, 81);
  const std::string path = (dir / "pose.bin").string();
  save_pose_checkpoint(path, enc, 81);
  auto loaded = load_pose_checkpoint(path);
  REQUIRE(loaded != nullptr);
  CHECK(loaded->frozen());
  CHECK(loaded->joints() == kNumJoints);
  CHECK(loaded->embedding_dim() == 12);
  CHECK(loaded->param_hash() == enc.param_hash());
  Rng r(16);
  const Tensor images = random_tensor(r, {2, 96, 32, 3}, 0.0, 1.0);
  Tensor c1, e1, c2, e2;
  enc.pose_forward(images, c1, e1);
  loaded->pose_forward(images, c2, e2);
  CHECK(bitwise_equal(c1, c2));
  CHECK(bitwise_equal(e1, e2));
}

TEST_CASE("adamw minimizes a quadratic and applies decoupled decay") {
  Tensor x({1});
  Tensor gx({1});
  x[0] = 10.0;
  std::vector<ParamRef> ps = {{"x", &x, &gx}};
  AdamW opt(ps, 0.1, 0.0);
  for (int i = 0; i < 400; ++i) {
    opt.zero_grad();
    gx[0] = 2.0 * (x[0] - 3.0);
    opt.step();
  }
  CHECK(x[0] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(opt.step_count() == 400);

  // zero gradient: pure decay x *= (1 - lr*wd) each step
  Tensor y({1}), gy({1});
  y[0] = 1.0;
  std::vector<ParamRef> qs = {{"y", &y, &gy}};
  AdamW dec(qs, 0.01, 0.5);
  dec.zero_grad();
  dec.step();
  CHECK(y[0] == doctest::Approx(1.0 - 0.01 * 0.5).epsilon(1e-12));
}

TEST_CASE("gradient clipping rescales only above the threshold") {
  Tensor x({2}), gx({2});
  std::vector<ParamRef> ps = {{"x", &x, &gx}};
  AdamW opt(ps, 0.1, 0.0);
  gx[0] = 3.0;
  gx[1] = 4.0;
  CHECK(opt.grad_norm() == doctest::Approx(5.0).epsilon(1e-12));
  opt.clip_grad_norm(10.0);
  CHECK(gx[0] == 3.0);
  CHECK(gx[1] == 4.0);
  opt.clip_grad_norm(2.5);
  CHECK(opt.grad_norm() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(gx[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(gx[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("optimizer rejects parameters without storage") {
  Tensor x({1});
  std::vector<ParamRef> ps = {{"x", &x, nullptr}};
  CHECK_THROWS_AS(AdamW(ps, 0.1, 0.0), DomainError);
  CHECK_THROWS_AS(AdamW({}, 0.0, 0.0), DomainError);
}
