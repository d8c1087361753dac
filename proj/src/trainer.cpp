#include "pgds/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "pgds/common.hpp"
#include "pgds/kernels.hpp"
#include "pgds/losses.hpp"
#include "pgds/png_io.hpp"
#include "pgds/rng.hpp"
#include "pgds/simplex.hpp"

namespace pgds {

namespace fs = std::filesystem;

namespace {

// Shortest round-trip-exact decimal for a double; JSONL lines and config
// snapshots use the same representation so identical runs log identically.
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool has_prefix(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

}  // namespace

PGDSModel::PGDSModel(const PGDSConfig& config)
    : cfg(config), human(config.channels, config.embedding_dim),
      pose(config.joints, config.embedding_dim) {
  validate(cfg);
  for (int stage : cfg.php_stages) {
    projectors.push_back(
        std::make_unique<Projector>(stage, cfg.channels[stage], cfg.embedding_dim));
  }
}

void PGDSModel::init(std::uint64_t seed) {
  human.init(seed);
  Rng prng(derive_seed(seed, "php-init"));
  for (auto& p : projectors) p->init(prng);
}

std::vector<ParamRef> PGDSModel::trainable_params() {
  std::vector<ParamRef> out = human.params();
  for (auto& p : projectors) {
    auto pp = p->params();
    out.insert(out.end(), pp.begin(), pp.end());
  }
  return out;
}

std::vector<ParamRef> PGDSModel::state_tensors() {
  std::vector<ParamRef> out = human.params();
  auto hb = human.buffers();
  out.insert(out.end(), hb.begin(), hb.end());
  for (auto& p : projectors) {
    auto pp = p->params();
    out.insert(out.end(), pp.begin(), pp.end());
    auto pb = p->buffers();
    out.insert(out.end(), pb.begin(), pb.end());
  }
  auto tp = pose.all_params();
  out.insert(out.end(), tp.begin(), tp.end());
  return out;
}

void load_teacher(PGDSModel& model, const std::string& pose_checkpoint_path) {
  CheckpointData data = load_checkpoint(pose_checkpoint_path);
  PGDS_CHECK_IO(data.kind == 1, "not a pose-encoder checkpoint: ", pose_checkpoint_path);
  PGDS_CHECK_STATE(data.pose_frozen, "pose checkpoint was saved before freezing");
  auto kv = parse_ini(data.config_text);
  const int joints = std::stoi(kv.at("pose.joints"));
  const int dim = std::stoi(kv.at("pose.embedding_dim"));
  PGDS_CHECK_ARG(joints == model.cfg.joints, "pose checkpoint joints ", joints,
                 " does not match config joints ", model.cfg.joints);
  PGDS_CHECK_ARG(dim == model.cfg.embedding_dim, "pose checkpoint embedding dim ", dim,
                 " does not match config embedding dim ", model.cfg.embedding_dim);
  model.pose.set_frozen(false);
  unpack_params(data, model.pose.all_params());
  model.pose.set_frozen(true);
}

void save_model_checkpoint(const std::string& path, PGDSModel& model, AdamW* opt, int epoch,
                           std::int64_t step) {
  CheckpointData data;
  data.kind = 0;
  data.config_text = serialize_config(model.cfg);
  data.seed = model.cfg.seed;
  data.epoch = epoch;
  data.step = step;
  data.pose_frozen = model.pose.frozen();
  pack_params(model.state_tensors(), data.tensors);
  if (opt) {
    const auto& params = opt->params();
    for (std::size_t k = 0; k < params.size(); ++k) {
      data.tensors.emplace_back("opt.m." + params[k].name, opt->moment1()[k]);
      data.tensors.emplace_back("opt.v." + params[k].name, opt->moment2()[k]);
    }
    Tensor t({1});
    t[0] = static_cast<double>(opt->step_count());
    data.tensors.emplace_back("opt.t", t);
  }
  save_checkpoint(path, data);
}

std::unique_ptr<PGDSModel> load_model_checkpoint(const std::string& path, CheckpointData* raw) {
  CheckpointData data = load_checkpoint(path);
  PGDS_CHECK_IO(data.kind == 0, "not a full training checkpoint: ", path);
  PGDSConfig cfg;
  apply_overrides(cfg, parse_ini(data.config_text));
  validate(cfg);
  auto model = std::make_unique<PGDSModel>(cfg);
  model->pose.set_frozen(false);
  unpack_params(data, model->state_tensors());
  model->pose.set_frozen(data.pose_frozen);
  if (raw) *raw = std::move(data);
  return model;
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr,
                   double warmup_frac) {
  PGDS_CHECK_ARG(total_steps > 0, "lr schedule needs a positive step count");
  PGDS_CHECK_ARG(step >= 0 && step <= total_steps, "lr schedule step ", step,
                 " outside [0, ", total_steps, "]");
  PGDS_CHECK_ARG(base_lr > 0.0, "base_lr must be positive");
  PGDS_CHECK_ARG(warmup_frac >= 0.0 && warmup_frac < 1.0, "warmup_frac must be in [0,1)");
  const double lo = base_lr / 100.0;
  const auto warmup_steps =
      static_cast<std::int64_t>(std::floor(warmup_frac * static_cast<double>(total_steps)));
  if (step < warmup_steps) {
    return lo + (base_lr - lo) * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double denom = static_cast<double>(total_steps - warmup_steps);
  const double t = denom > 0.0 ? static_cast<double>(step - warmup_steps) / denom : 1.0;
  constexpr double kPi = 3.14159265358979323846;
  return lo + (base_lr - lo) * 0.5 * (1.0 + std::cos(kPi * t));
}

namespace {

void restore_optimizer(AdamW& opt, const CheckpointData& data) {
  const auto& params = opt.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor* m = data.find("opt.m." + params[k].name);
    const Tensor* v = data.find("opt.v." + params[k].name);
    PGDS_CHECK_IO(m && v, "checkpoint lacks optimizer state for ", params[k].name);
    PGDS_CHECK_IO(m->same_shape(*params[k].value) && v->same_shape(*params[k].value),
                  "optimizer state shape mismatch for ", params[k].name);
    opt.moment1()[k] = *m;
    opt.moment2()[k] = *v;
  }
  const Tensor* t = data.find("opt.t");
  PGDS_CHECK_IO(t && t->size() == 1, "checkpoint lacks the optimizer step counter");
  opt.step_counter() = static_cast<int>((*t)[0]);
}

// Trainables are exactly the student and projector parameters; the frozen
// teacher holds everything else. Violations mean a wiring bug, so this is
// checked once per run.
void assert_param_partition(PGDSModel& model, const std::vector<ParamRef>& trainables) {
  std::size_t n_human = 0, n_php = 0;
  for (const auto& p : trainables) {
    PGDS_CHECK_STATE(has_prefix(p.name, "human.") || has_prefix(p.name, "php."),
                     "unexpected trainable parameter ", p.name);
    if (has_prefix(p.name, "human.")) ++n_human;
    else ++n_php;
  }
  PGDS_CHECK_STATE(n_human > 0, "student has no trainable parameters");
  PGDS_CHECK_STATE(model.projectors.empty() || n_php > 0,
                   "projectors are attached but contribute no trainable parameters");
  auto frozen = model.pose.all_params();
  PGDS_CHECK_STATE(!frozen.empty(), "teacher has no parameters");
  for (const auto& p : frozen) {
    PGDS_CHECK_STATE(has_prefix(p.name, "pose."), "unexpected teacher parameter ", p.name);
  }
  PGDS_CHECK_STATE(model.pose.frozen(), "teacher must be frozen before training");
}

}  // namespace

TrainResult train(const PGDSConfig& cfg_in, const Dataset& ds,
                  const std::string& pose_checkpoint_path, const std::string& out_dir,
                  const std::string& resume_path, int stop_after_epochs) {
  PGDSConfig cfg = cfg_in;
  CheckpointData resume_data;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    resume_data = load_checkpoint(resume_path);
    PGDS_CHECK_IO(resume_data.kind == 0, "not a full training checkpoint: ", resume_path);
    PGDSConfig snap;
    apply_overrides(snap, parse_ini(resume_data.config_text));
    cfg = snap;
  }
  validate(cfg);
  PGDS_CHECK_ARG(cfg.image_height == ds.meta.image_height &&
                     cfg.image_width == ds.meta.image_width,
                 "config image size ", cfg.image_height, "x", cfg.image_width,
                 " does not match dataset ", ds.meta.image_height, "x", ds.meta.image_width);
  PGDS_CHECK_ARG(cfg.joints == ds.meta.joints, "config joints ", cfg.joints,
                 " does not match dataset joints ", ds.meta.joints);

  if (cfg.strict_deterministic) kernels::set_thread_count(1);

  auto model = std::make_unique<PGDSModel>(cfg);
  int start_epoch = 0;
  if (resuming) {
    model->pose.set_frozen(false);
    unpack_params(resume_data, model->state_tensors());
    model->pose.set_frozen(resume_data.pose_frozen);
    PGDS_CHECK_STATE(resume_data.pose_frozen, "resumed checkpoint holds an unfrozen teacher");
    start_epoch = resume_data.epoch;
  } else {
    model->init(cfg.seed);
    load_teacher(*model, pose_checkpoint_path);
  }

  auto trainables = model->trainable_params();
  assert_param_partition(*model, trainables);
  AdamW opt(trainables, cfg.base_lr, cfg.weight_decay);
  if (resuming) restore_optimizer(opt, resume_data);

  PKBatchSampler sampler(ds.records, cfg.batch_p, cfg.batch_k, cfg.seed);
  const int spe = sampler.batches_per_epoch();
  const auto total_steps = static_cast<std::int64_t>(cfg.epochs) * spe;
  PGDS_CHECK_ARG(start_epoch <= cfg.epochs, "checkpoint epoch ", start_epoch,
                 " exceeds the configured epoch count ", cfg.epochs);
  int end_epoch = cfg.epochs;
  if (stop_after_epochs > 0) end_epoch = std::min(end_epoch, stop_after_epochs);

  fs::create_directories(out_dir);
  const std::string log_path = out_dir + "/train_log.jsonl";
  const std::string ckpt_path = out_dir + "/checkpoint.bin";
  std::ofstream log(log_path, resuming ? std::ios::app : std::ios::trunc);
  PGDS_CHECK_IO(log.good(), "cannot open training log ", log_path);

  // The whole train split fits in memory at desk scale; decode each PNG once.
  std::unordered_map<int, Tensor> pixels;
  for (int i : indices_with_split(ds.records, Split::train)) {
    pixels.emplace(i, read_png(image_abs_path(ds, ds.records[i])));
  }

  const int batch = cfg.batch_size();
  const double tau = cfg.temperature;
  const bool guide_grad = cfg.guide_weight > 0.0;
  const int n_proj = static_cast<int>(model->projectors.size());
  const auto hw3 = static_cast<std::size_t>(cfg.image_height) * cfg.image_width * 3;

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.log_path = log_path;

  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const auto batches = sampler.epoch_batches(epoch);
    double epoch_sum = 0.0;
    for (int bstep = 0; bstep < static_cast<int>(batches.size()); ++bstep) {
      const std::int64_t gstep = static_cast<std::int64_t>(epoch) * spe + bstep;
      opt.set_lr(lr_schedule(gstep, total_steps, cfg.base_lr, cfg.warmup_frac));
      const std::vector<int>& bidx = batches[bstep];

      Tensor images({static_cast<std::size_t>(batch), static_cast<std::size_t>(cfg.image_height),
                     static_cast<std::size_t>(cfg.image_width), 3});
      std::vector<int> labels(batch);
      for (int b = 0; b < batch; ++b) {
        const PersonRecord& rec = ds.records[bidx[b]];
        labels[b] = rec.identity_id;
        Tensor img = augment(pixels.at(bidx[b]),
                             derive_seed(cfg.seed, "augment", static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(bstep),
                                         static_cast<std::uint64_t>(b)));
        std::copy(img.data(), img.data() + hw3, images.data() + b * hw3);
      }

      opt.zero_grad();

      const auto abort_non_finite = [&]() {
        std::ostringstream oss;
        oss << "non-finite loss at epoch " << epoch << " step " << gstep
            << "; batch record indices:";
        for (int idx : bidx) oss << ' ' << idx;
        throw StateError(oss.str());
      };

      MultiScaleFeatureSet feats = model->human.forward(images, true);
      for (std::size_t i = 0; i < feats.embedding.size(); ++i) {
        if (!std::isfinite(feats.embedding[i])) abort_non_finite();
      }

      Tensor pose_conf, pose_emb;
      model->pose.pose_forward(images, pose_conf, pose_emb);
      Tensor pose_probs, pose_q;
      softmax_rows(pose_emb, tau, pose_probs, pose_q);

      std::vector<Tensor> proj_out(n_proj), proj_probs(n_proj), proj_q(n_proj);
      for (int i = 0; i < n_proj; ++i) {
        proj_out[i] = model->projectors[i]->forward(feats.stages[cfg.php_stages[i]], true);
        softmax_rows(proj_out[i], tau, proj_probs[i], proj_q[i]);
      }
      Tensor emb_probs, emb_q;
      if (cfg.include_final_embedding_in_guide) {
        softmax_rows(feats.embedding, tau, emb_probs, emb_q);
      }

      std::vector<const Tensor*> layer_probs;
      for (int i = 0; i < n_proj; ++i) layer_probs.push_back(&proj_probs[i]);
      if (cfg.include_final_embedding_in_guide) layer_probs.push_back(&emb_probs);

      // The triplet operates on unit-norm embeddings, the same geometry the
      // retrieval stage ranks with; the guide branch keeps the raw logits.
      Tensor emb_unit;
      l2_normalize_rows(feats.embedding, emb_unit);
      Tensor d_emb_unit(emb_unit.shape());
      const double triplet =
          triplet_batch_hard(emb_unit, labels, cfg.triplet_margin, &d_emb_unit, 1.0);
      Tensor d_emb(feats.embedding.shape());
      l2_normalize_rows_backward(feats.embedding, d_emb_unit, d_emb);

      // The guide term is always evaluated for the log; its gradient only
      // flows when lambda > 0, so a lambda = 0 run updates the student
      // exactly like a guide-free run.
      std::vector<Tensor> d_layer_probs;
      if (guide_grad) {
        d_layer_probs.assign(layer_probs.size(), Tensor(pose_probs.shape()));
      }
      GuideBatchResult guide =
          guide_loss_batch(pose_probs, layer_probs, labels, cfg.guide_margin,
                           guide_grad ? &d_layer_probs : nullptr, cfg.guide_weight);
      LossBreakdown lb = combined_loss(triplet, guide, cfg.guide_weight);

      if (!std::isfinite(lb.combined)) abort_non_finite();

      std::array<Tensor, 5> stage_extra{};
      if (guide_grad) {
        for (int i = 0; i < n_proj; ++i) {
          Tensor d_logits(proj_out[i].shape());
          softmax_rows_backward(proj_q[i], d_layer_probs[i], tau, d_logits);
          stage_extra[cfg.php_stages[i]] = model->projectors[i]->backward(d_logits);
        }
        if (cfg.include_final_embedding_in_guide) {
          Tensor d_emb_logits(feats.embedding.shape());
          softmax_rows_backward(emb_q, d_layer_probs[n_proj], tau, d_emb_logits);
          for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb[i] += d_emb_logits[i];
        }
      }
      model->human.backward(d_emb, &stage_extra, nullptr);

      opt.clip_grad_norm(cfg.grad_clip_norm);
      opt.step();

      epoch_sum += lb.combined;
      log << "{\"step\":" << gstep << ",\"epoch\":" << epoch << ",\"lr\":" << fmt_double(opt.lr())
          << ",\"triplet\":" << fmt_double(lb.triplet) << ",\"guide\":" << fmt_double(lb.guide)
          << ",\"guide_per_layer\":[";
      for (std::size_t i = 0; i < lb.guide_per_layer.size(); ++i) {
        if (i) log << ',';
        log << fmt_double(lb.guide_per_layer[i]);
      }
      log << "],\"combined\":" << fmt_double(lb.combined) << "}\n";
    }
    result.epoch_mean_combined.push_back(epoch_sum / static_cast<double>(batches.size()));
    save_model_checkpoint(ckpt_path, *model, &opt, epoch + 1,
                          static_cast<std::int64_t>(epoch + 1) * spe);
    log.flush();
    PGDS_CHECK_IO(log.good(), "failed writing training log ", log_path);
  }

  result.epochs_run = end_epoch;
  result.steps_run = static_cast<std::int64_t>(end_epoch) * spe;
  return result;
}

}  // namespace pgds
