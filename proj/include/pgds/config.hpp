#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pgds {

// Full experiment configuration. Defaults are the desk-scale setup: 96x32
// inputs, a 5-stage encoder with channels {8,16,32,64,128} and a 128-d
// embedding. Channel widths and image size scale down 6x and 4x from the
// reference full-scale setup (768-d embedding, 384x128 inputs).
struct PGDSConfig {
  // model
  int embedding_dim = 128;
  std::vector<int> channels = {8, 16, 32, 64, 128};
  std::vector<int> php_stages = {1, 2, 3};
  bool include_final_embedding_in_guide = true;
  // Semantic-controller ratio of the full-scale human backbone. Inert here:
  // recorded so configs stay comparable with the full-scale recipe.
  double semantic_ratio = 0.2;

  // loss
  double temperature = 2.0;
  double triplet_margin = 0.2;
  double guide_margin = 2.0;
  double guide_weight = 0.8;

  // train
  int batch_p = 4;
  int batch_k = 4;
  double base_lr = 8e-4;
  double weight_decay = 0.05;
  double grad_clip_norm = 5.0;
  double warmup_frac = 0.05;
  int epochs = 30;
  std::uint64_t seed = 42;
  bool strict_deterministic = false;

  // data
  int image_height = 96;
  int image_width = 32;
  int joints = 13;

  int batch_size() const { return batch_p * batch_k; }
};

// Throws DomainError if any invariant is violated: guide_weight in [0,1],
// positive margins and temperature, php_stages a nonempty subset of {0..4},
// image dims divisible by 32, exactly 5 strictly increasing channel widths.
void validate(const PGDSConfig& cfg);

// Key/value text config with [section] headers, '#' or ';' comments.
// Keys are addressed as "section.key". Unknown keys are rejected.
std::map<std::string, std::string> read_ini(const std::string& path);
std::map<std::string, std::string> parse_ini(const std::string& text);

// Builds a config from defaults plus the parsed file; validates.
PGDSConfig load_config(const std::string& path);

// Applies "section.key" -> value overrides on top of cfg (CLI flags reuse the
// same keys as the file). Throws DomainError on unknown keys or bad values.
void apply_overrides(PGDSConfig& cfg, const std::map<std::string, std::string>& kv);

// Canonical INI serialization; stable ordering so snapshots diff cleanly.
std::string serialize_config(const PGDSConfig& cfg);

// PGDS-d attaches d projectors to the deepest intermediate stages:
// depth 1 -> {3}, 2 -> {2,3}, 3 -> {1,2,3}.
std::vector<int> php_stages_for_depth(int depth);

}  // namespace pgds
