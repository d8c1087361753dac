#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgds/config.hpp"
#include "pgds/datagen.hpp"

namespace pgds {

// Sweep over guide weight (lambda) or projector depth (php_depth, attaching
// 1..3 projectors to the deepest intermediate stages), a full train+eval per
// (value, seed) cell.
struct AblationSpec {
  std::string parameter;  // "lambda" or "php_depth"
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  PGDSConfig base;
};

struct AblationCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double map_standard = 0.0, r1_standard = 0.0;
  double map_cc = 0.0, r1_cc = 0.0;
};

struct AblationRow {
  double value = 0.0;
  std::size_t trainable_params = 0;
  int ok_runs = 0, failed_runs = 0;
  double mean_map_standard = 0.0, std_map_standard = 0.0;
  double mean_r1_standard = 0.0, std_r1_standard = 0.0;
  double mean_map_cc = 0.0, std_map_cc = 0.0;
  double mean_r1_cc = 0.0, std_r1_cc = 0.0;
};

struct AblationTable {
  std::string parameter;
  std::vector<AblationCell> cells;
  std::vector<AblationRow> rows;  // one per value, in spec order
};

void validate(const AblationSpec& spec);

// Trains and evaluates every (value, seed) cell. A failed cell is recorded
// with its error and the sweep continues. Each cell owns the subdirectory
// <out_dir>/<parameter>_<value>_s<seed>. Cells share nothing, so `parallel`
// of them may run concurrently; strict-deterministic sweeps must stay
// sequential because that mode pins the global kernel thread count.
AblationTable run_ablation(const AblationSpec& spec, const Dataset& ds,
                           const std::string& pose_checkpoint_path, const std::string& out_dir,
                           int parallel = 1);

// Trainable parameters of a model configured for this sweep value (the
// depth sweep's parameter-count column).
std::size_t trainable_param_count(const PGDSConfig& cfg);

void write_ablation_json(const std::string& path, const AblationTable& table);
std::string format_ablation_text(const AblationTable& table);

// Markdown summary of finished run directories: loss curves from each run's
// train_log.jsonl, CMC overlays from metric reports, and a results table.
// Run directories without a training log are skipped with a warning line in
// the returned summary. Throws DomainError when run_dirs is empty. Output is
// a deterministic function of the inputs.
std::string run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace pgds
