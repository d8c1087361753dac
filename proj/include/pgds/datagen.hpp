#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pgds/tensor.hpp"

namespace pgds {

// Synthetic person generator. Identity is carried by skeleton proportions
// (plus weak skin/hair tones); clothes are pure color overlays, so the
// clothes-changing protocol has exact ground truth: geometry is invariant
// across clothes_id for a fixed pose_seed.

enum class Split { train, query, gallery };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct PersonRecord {
  int identity_id = 0;
  int camera_id = 0;
  int clothes_id = 0;
  std::uint64_t pose_seed = 0;
  Split split = Split::train;
  std::string image_path;  // relative to the dataset directory
};

// Skeleton proportions in figure units (fractions of nominal body height).
// Two identities always differ in at least one ratio by >= 5% (relative).
struct IdentitySpec {
  int identity_id = 0;
  std::vector<double> limb_ratios;  // neck, torso, shoulder_half, hip_half,
                                    // upper_arm, fore_arm, thigh, shin
  double head_size = 0.0;
  std::array<double, 3> skin_tone{};
  std::array<double, 3> hair_tone{};
  double thickness_jitter = 0.0;  // in [0,1], scaled by the style's range
};

inline constexpr int kNumJoints = 13;
// Joint order: head, neck, pelvis, l/r shoulder, l/r elbow, l/r hand,
// l/r knee, l/r foot.
struct Bone {
  int a, b;
};
const std::vector<Bone>& skeleton_bones();

// Joint pixel positions plus the rendering parameters that depend only on
// (identity, pose, style) — everything a body mask needs, nothing clothes do.
struct FigureGeometry {
  std::array<std::array<double, 2>, kNumJoints> joints;  // (x, y) image px
  double head_radius = 0.0;                              // px
  double arm_thickness = 0.0;                            // px
  double leg_thickness = 0.0;                            // px
  double torso_radius = 0.0;                             // px
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  int identities = 0;
  int cameras = 0;
  int clothes_per_identity = 0;
  int images_per_combination = 0;
  int image_height = 96;
  int image_width = 32;
  int joints = kNumJoints;
  int heatmap_scale = 4;
  std::string style = "a";  // "a" or "b": background palette + limb thickness
  double train_fraction = 0.6;
};

struct GenOptions {
  int n_identities = 8;
  int cameras = 2;
  int clothes_per_identity = 2;
  int images_per_combination = 4;
  std::uint64_t seed = 1;
  int image_height = 96;
  int image_width = 32;
  std::string style = "a";
  double train_fraction = 0.6;
};

// Renders the full dataset (PNG images + keypoint heatmap files), writes
// manifest.csv and meta.ini under out_dir. Fully determined by options.
void generate_dataset(const GenOptions& opt, const std::string& out_dir);

// Identity specs are regenerated, not stored: the sequence is a deterministic
// function of (seed, n) including the distinctness rejection loop.
std::vector<IdentitySpec> make_identity_specs(std::uint64_t seed, int n);

FigureGeometry pose_figure(const IdentitySpec& spec, std::uint64_t pose_seed, int image_height,
                           int image_width, const std::string& style);

// (H, W, 3) image in [0,1]. Background depends on (camera, style, noise
// stream); figure colors depend on clothes_id and the identity's tones.
Tensor render_person(const FigureGeometry& fig, const IdentitySpec& spec, int camera_id,
                     int clothes_id, std::uint64_t noise_seed, int image_height, int image_width,
                     const std::string& style, std::uint64_t dataset_seed);

// (H, W) coverage in [0,1]; body mask = coverage > 0.5.
Tensor render_body_mask(const FigureGeometry& fig, int image_height, int image_width);

// (h, w, J) ground-truth confidence map at 1/heatmap_scale resolution: a
// Gaussian blob per joint plus faint ridges along incident bones, so the
// per-channel spatial mean encodes the adjacent limb lengths.
Tensor render_heatmap(const FigureGeometry& fig, int hm_h, int hm_w, int scale);

// Re-derives the geometry / mask for a stored record.
FigureGeometry figure_for_record(const DatasetMeta& meta, const std::vector<IdentitySpec>& specs,
                                 const PersonRecord& rec);
Tensor body_mask_for_record(const DatasetMeta& meta, const std::vector<IdentitySpec>& specs,
                            const PersonRecord& rec);

// Heatmap container: 16-byte header (magic 'HMP1', h, w, J as u32 little
// endian) followed by float32 data in (h, w, J) row-major order.
void write_heatmap_file(const std::string& path, const Tensor& hm);
Tensor read_heatmap_file(const std::string& path);

// Manifest CSV: header identity_id,camera_id,clothes_id,pose_seed,split,image_path.
void write_manifest(const std::string& path, const std::vector<PersonRecord>& records);
// Parses and validates: unique (id,cam,clothes,pose_seed) keys, every query
// identity present in gallery, referenced image files exist (when check_files).
std::vector<PersonRecord> load_manifest(const std::string& path, bool check_files = true);

void write_meta(const std::string& path, const DatasetMeta& meta);
DatasetMeta load_meta(const std::string& path);

struct Dataset {
  std::string dir;
  DatasetMeta meta;
  std::vector<PersonRecord> records;
};
Dataset load_dataset(const std::string& dir);

std::string image_abs_path(const Dataset& ds, const PersonRecord& rec);
std::string heatmap_abs_path(const Dataset& ds, const PersonRecord& rec);

std::vector<int> indices_with_split(const std::vector<PersonRecord>& records, Split s);

// PK batches: P identities x K instances, seeded epoch permutations,
// with-replacement fill for identities holding fewer than K train images.
class PKBatchSampler {
 public:
  PKBatchSampler(const std::vector<PersonRecord>& records, int p, int k, std::uint64_t seed);

  int batches_per_epoch() const { return batches_per_epoch_; }
  int num_identities() const { return static_cast<int>(by_identity_.size()); }
  // Record indices (into the full record list) for every batch of one epoch.
  std::vector<std::vector<int>> epoch_batches(int epoch) const;

 private:
  std::vector<int> identity_ids_;
  std::vector<std::vector<int>> by_identity_;  // aligned with identity_ids_
  int p_, k_;
  std::uint64_t seed_;
  int batches_per_epoch_;
};

// Horizontal flip (p=0.5) then random erasing (p=0.5, area 2-40%, aspect
// 0.3-3.3, uniform-noise fill), fully determined by seed.
Tensor augment(const Tensor& image, std::uint64_t seed);

}  // namespace pgds
