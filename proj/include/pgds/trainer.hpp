#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pgds/checkpoint.hpp"
#include "pgds/config.hpp"
#include "pgds/datagen.hpp"
#include "pgds/encoders.hpp"
#include "pgds/optim.hpp"
#include "pgds/php.hpp"

namespace pgds {

// Student + projectors + frozen teacher assembled per config. The teacher's
// weights come from a pose checkpoint; only the student and projectors are
// ever handed to an optimizer.
struct PGDSModel {
  PGDSConfig cfg;
  HumanEncoder human;
  PoseEncoder pose;
  std::vector<std::unique_ptr<Projector>> projectors;  // aligned with cfg.php_stages

  explicit PGDSModel(const PGDSConfig& config);

  void init(std::uint64_t seed);  // student + projectors; teacher is loaded, not initialized
  std::vector<ParamRef> trainable_params();
  // Everything a checkpoint stores: trainables, normalization buffers, and
  // the teacher's weights, in fixed registration order.
  std::vector<ParamRef> state_tensors();
};

// Loads the teacher weights from a pose checkpoint (kind 1) into the model
// and verifies it was frozen.
void load_teacher(PGDSModel& model, const std::string& pose_checkpoint_path);

// Full-state checkpoint (kind 0) with optimizer moments.
void save_model_checkpoint(const std::string& path, PGDSModel& model, AdamW* opt, int epoch,
                           std::int64_t step);
// Builds a model from the checkpoint's embedded config snapshot.
std::unique_ptr<PGDSModel> load_model_checkpoint(const std::string& path,
                                                 CheckpointData* raw = nullptr);

// Linear warmup over the first warmup_frac of steps from base_lr/100 up to
// base_lr, then cosine decay back down to base_lr/100.
double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr,
                   double warmup_frac);

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  int epochs_run = 0;
  std::int64_t steps_run = 0;
  std::vector<double> epoch_mean_combined;
};

// End-to-end training: PK batches, augmentation, student forward, frozen
// teacher forward, projector alignment, combined loss, AdamW with global
// gradient clipping, per-step JSONL logging, a checkpoint every epoch.
// When resume_path is nonempty the run continues bit-exactly from that
// checkpoint (its embedded config wins) and appends to the existing log.
// stop_after_epochs > 0 pauses the run after that many total epochs while
// keeping the full-run schedule, leaving a resumable checkpoint behind.
TrainResult train(const PGDSConfig& cfg, const Dataset& ds,
                  const std::string& pose_checkpoint_path, const std::string& out_dir,
                  const std::string& resume_path = "", int stop_after_epochs = -1);

}  // namespace pgds
