#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "flowstate/model.hpp"

namespace flowstate {

/// Optimizer/trainer state carried inside a checkpoint so interrupted runs
/// resume on the exact trajectory.
struct TrainState {
  long step = 0;                       ///< completed optimizer steps
  std::vector<Tensor> adam_m, adam_v;  ///< aligned with named_tensors() order
};

struct Checkpoint {
  ModelConfig config;
  StackParams params;
  std::optional<TrainState> train_state;
};

/// Self-describing binary container: magic "FSCKPT01", a JSON header with the
/// format version, model config and tensor directory, then the raw f64
/// little-endian payload in directory order. Round-trips are bit-exact.
/// Written atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Allocates a parameter stack with the config's shapes, all zeros.
StackParams make_empty_stack(const ModelConfig& cfg);

}  // namespace flowstate
