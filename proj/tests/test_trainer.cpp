#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "pgds/checkpoint.hpp"
#include "pgds/common.hpp"
#include "pgds/datagen.hpp"
#include "pgds/evaluate.hpp"
#include "pgds/trainer.hpp"

using namespace pgds;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pgds_trainer_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PGDSConfig micro_config() {
  PGDSConfig cfg;
  cfg.channels = {2, 3, 4, 5, 6};
  cfg.embedding_dim = 6;
  cfg.batch_p = 2;
  cfg.batch_k = 2;
  cfg.epochs = 2;
  cfg.base_lr = 3e-4;
  cfg.strict_deterministic = true;
  cfg.seed = 99;
  return cfg;
}

struct TrainerFixture {
  Dataset ds;
  std::string pose_ckpt;
};

const TrainerFixture& fixture() {
  static TrainerFixture f = [] {
    TrainerFixture out;
    const fs::path dir = fresh_dir("data");
    GenOptions opt;
    opt.n_identities = 4;
    opt.cameras = 2;
    opt.clothes_per_identity = 2;
    opt.images_per_combination = 2;
    opt.seed = 4242;
    generate_dataset(opt, dir.string());
    out.ds = load_dataset(dir.string());
    PoseEncoder enc(kNumJoints, 6);
    enc.init(55);
    pretrain_pose_encoder(enc, out.ds, 1, 55);
    out.pose_ckpt = (dir / "pose.ckpt").string();
    save_pose_checkpoint(out.pose_ckpt, enc, 55);
    return out;
  }();
  return f;
}

// Bitwise comparison of every tensor with the given name prefix.
bool tensors_match(const CheckpointData& a, const CheckpointData& b, const std::string& prefix) {
  int compared = 0;
  for (const auto& [name, t] : a.tensors) {
    if (name.rfind(prefix, 0) != 0) continue;
    const Tensor* other = b.find(name);
    if (!other || !other->same_shape(t)) return false;
    if (std::memcmp(t.data(), other->data(), t.size() * sizeof(double)) != 0) return false;
    ++compared;
  }
  return compared > 0;
}

}  // namespace

TEST_CASE("trainable set covers student and projectors, never the teacher") {
  PGDSConfig cfg = micro_config();
  PGDSModel model(cfg);
  model.init(3);
  const auto trainables = model.trainable_params();
  int n_human = 0, n_php = 0;
  for (const auto& p : trainables) {
    const bool human = p.name.rfind("human.", 0) == 0;
    const bool php = p.name.rfind("php.", 0) == 0;
    CHECK((human || php));
    CHECK(p.name.rfind("pose.", 0) != 0);
    n_human += human;
    n_php += php;
  }
  CHECK(n_human > 0);
  CHECK(n_php > 0);
  // one projector per guided stage
  CHECK(model.projectors.size() == cfg.php_stages.size());
  // state_tensors sees the teacher as well
  std::set<std::string> state_names;
  for (const auto& p : model.state_tensors()) state_names.insert(p.name);
  bool has_pose = false;
  for (const auto& n : state_names) has_pose = has_pose || n.rfind("pose.", 0) == 0;
  CHECK(has_pose);
}

TEST_CASE("teacher loading rejects wrong checkpoint kinds and unfrozen weights") {
  const TrainerFixture& f = fixture();
  PGDSConfig cfg = micro_config();
  PGDSModel model(cfg);
  model.init(3);
  CHECK_NOTHROW(load_teacher(model, f.pose_ckpt));
  CHECK(model.pose.frozen());

  const fs::path dir = fresh_dir("teacher");
  // a full training checkpoint is not a teacher
  const std::string full = (dir / "full.bin").string();
  save_model_checkpoint(full, model, nullptr, 0, 0);
  CHECK_THROWS_AS(load_teacher(model, full), IoError);
  // an unfrozen pose encoder cannot supervise anyone
  PoseEncoder raw(kNumJoints, 6);
  raw.init(7);
  const std::string unfrozen = (dir / "unfrozen.bin").string();
  save_pose_checkpoint(unfrozen, raw, 7);
  CHECK_THROWS_AS(load_teacher(model, unfrozen), StateError);
  // a teacher of the wrong width is rejected up front
  PGDSConfig wide = micro_config();
  wide.embedding_dim = 8;
  PGDSModel mismatch(wide);
  mismatch.init(3);
  CHECK_THROWS_AS(load_teacher(mismatch, f.pose_ckpt), DomainError);
  CHECK_THROWS_AS(load_teacher(model, (dir / "absent.bin").string()), IoError);
}

TEST_CASE("training writes a parseable structured log") {
  const TrainerFixture& f = fixture();
  const fs::path out = fresh_dir("smoke");
  PGDSConfig cfg = micro_config();
  const TrainResult res = train(cfg, f.ds, f.pose_ckpt, out.string());
  CHECK(res.epochs_run == 2);
  CHECK(res.steps_run > 0);
  CHECK(res.epoch_mean_combined.size() == 2);
  CHECK(fs::exists(res.checkpoint_path));
  CHECK(fs::exists(res.log_path));

  std::ifstream log(res.log_path);
  std::string line;
  std::int64_t expect_step = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CHECK(j["step"].get<std::int64_t>() == expect_step);
    CHECK(j["lr"].get<double>() > 0.0);
    CHECK(std::isfinite(j["triplet"].get<double>()));
    CHECK(std::isfinite(j["guide"].get<double>()));
    CHECK(std::isfinite(j["combined"].get<double>()));
    // projected stages plus the final embedding feed the guide
    CHECK(j["guide_per_layer"].size() == cfg.php_stages.size() + 1);
    ++expect_step;
  }
  CHECK(expect_step == res.steps_run);

  // the final checkpoint reloads into a working model
  CheckpointData raw;
  auto reloaded = load_model_checkpoint(res.checkpoint_path, &raw);
  CHECK(raw.epoch == 2);
  CHECK(raw.pose_frozen);
  CHECK(reloaded->pose.frozen());
  const MetricsReport rep = evaluate_dataset(*reloaded, f.ds, "standard");
  CHECK(rep.queries_evaluated > 0);
}

TEST_CASE("identical runs produce byte-identical logs and checkpoints") {
  const TrainerFixture& f = fixture();
  const fs::path a = fresh_dir("rerun_a");
  const fs::path b = fresh_dir("rerun_b");
  PGDSConfig cfg = micro_config();
  cfg.epochs = 1;
  const TrainResult ra = train(cfg, f.ds, f.pose_ckpt, a.string());
  const TrainResult rb = train(cfg, f.ds, f.pose_ckpt, b.string());
  CHECK(slurp(ra.log_path) == slurp(rb.log_path));
  CHECK(slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path));
}

TEST_CASE("an interrupted run resumes to the exact bytes of a straight run") {
  const TrainerFixture& f = fixture();
  const fs::path straight = fresh_dir("resume_straight");
  const fs::path split = fresh_dir("resume_split");
  PGDSConfig cfg = micro_config();
  const TrainResult full = train(cfg, f.ds, f.pose_ckpt, straight.string());

  const TrainResult half = train(cfg, f.ds, f.pose_ckpt, split.string(), "", 1);
  CHECK(half.epochs_run == 1);
  const TrainResult rest =
      train(cfg, f.ds, f.pose_ckpt, split.string(), half.checkpoint_path);
  CHECK(rest.epochs_run == 2);
  CHECK(slurp(full.log_path) == slurp(rest.log_path));
  CHECK(slurp(full.checkpoint_path) == slurp(rest.checkpoint_path));
}

TEST_CASE("resume validates the checkpoint it is handed") {
  const TrainerFixture& f = fixture();
  const fs::path out = fresh_dir("resume_bad");
  // a pose checkpoint is not a training state
  CHECK_THROWS_AS(train(micro_config(), f.ds, f.pose_ckpt, out.string(), f.pose_ckpt),
                  IoError);
  CHECK_THROWS_AS(
      train(micro_config(), f.ds, f.pose_ckpt, out.string(), (out / "nope.bin").string()),
      IoError);
}

TEST_CASE("a zero guide weight updates the student exactly like a guide-free run") {
  const TrainerFixture& f = fixture();
  PGDSConfig cfg = micro_config();
  cfg.epochs = 1;
  cfg.guide_weight = 0.0;

  const fs::path a = fresh_dir("noleak_with_emb");
  cfg.include_final_embedding_in_guide = true;
  train(cfg, f.ds, f.pose_ckpt, a.string());

  const fs::path b = fresh_dir("noleak_without_emb");
  cfg.include_final_embedding_in_guide = false;
  train(cfg, f.ds, f.pose_ckpt, b.string());

  const CheckpointData ca = load_checkpoint((a / "checkpoint.bin").string());
  const CheckpointData cb = load_checkpoint((b / "checkpoint.bin").string());
  CHECK(tensors_match(ca, cb, "human."));
  CHECK(tensors_match(ca, cb, "php."));
  CHECK(tensors_match(ca, cb, "opt.m.human."));

  // and the guide column is still reported in the log
  std::ifstream log(a / "train_log.jsonl");
  std::string line;
  std::getline(log, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["guide"].get<double>() > 0.0);
}

TEST_CASE("diverging runs abort with the offending batch in the message") {
  const TrainerFixture& f = fixture();
  const fs::path out = fresh_dir("nan");
  PGDSConfig cfg = micro_config();
  cfg.base_lr = 1e12;
  cfg.epochs = 30;
  cfg.warmup_frac = 0.0;
  try {
    train(cfg, f.ds, f.pose_ckpt, out.string());
    FAIL("expected the run to abort on a non-finite loss");
  } catch (const StateError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("batch record indices:") != std::string::npos);
  }
}

TEST_CASE("config and dataset geometry must agree") {
  const TrainerFixture& f = fixture();
  const fs::path out = fresh_dir("geometry");
  PGDSConfig cfg = micro_config();
  cfg.image_height = 48;
  cfg.image_width = 16;
  CHECK_THROWS_AS(train(cfg, f.ds, f.pose_ckpt, out.string()), DomainError);
}

TEST_CASE("the combined objective trends down over a short run") {
  const TrainerFixture& f = fixture();
  int improved = 0;
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    const fs::path out = fresh_dir("descent_" + std::to_string(seed));
    PGDSConfig cfg = micro_config();
    cfg.seed = seed;
    cfg.epochs = 12;
    cfg.base_lr = 5e-4;
    const TrainResult res = train(cfg, f.ds, f.pose_ckpt, out.string());
    improved += res.epoch_mean_combined.back() < res.epoch_mean_combined.front();
  }
  CHECK(improved >= 2);
}
