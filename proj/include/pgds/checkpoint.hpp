#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pgds/encoders.hpp"
#include "pgds/layers.hpp"
#include "pgds/tensor.hpp"

namespace pgds {

// Single-file binary container: magic, version, kind, config snapshot text,
// training counters, and an ordered named-tensor table (model parameters,
// normalization buffers, optimizer moments). No timestamps or other
// environment-dependent bytes, so identical state serializes identically.
struct CheckpointData {
  std::uint32_t version = 1;
  std::uint32_t kind = 0;  // 0 = full training state, 1 = pose encoder only
  std::string config_text;
  std::uint64_t seed = 0;
  std::int32_t epoch = 0;
  std::int64_t step = 0;
  bool pose_frozen = false;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// Copies live values into the table (appending) / back out of it by name.
void pack_params(const std::vector<ParamRef>& refs,
                 std::vector<std::pair<std::string, Tensor>>& out);
void unpack_params(const CheckpointData& data, const std::vector<ParamRef>& refs);

// Pose-encoder convenience wrappers (kind = 1).
void save_pose_checkpoint(const std::string& path, PoseEncoder& enc, std::uint64_t seed);
std::unique_ptr<PoseEncoder> load_pose_checkpoint(const std::string& path);

}  // namespace pgds
