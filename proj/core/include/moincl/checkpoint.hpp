#pragma once

#include <cstdint>
#include <filesystem>

#include "moincl/model.hpp"

namespace moincl {

struct CheckpointManifest {
  ModelDims dims;
  int vocab_size = 0;
  std::uint64_t vocab_fingerprint = 0;
  int task_index = 0;
  std::string method;
};

/// Layout: "MOINCL-CKPT 1\n", one manifest JSON line, then per tensor a header
/// line "<name> <rows> <cols> <group>\n" followed by rows*cols little-endian
/// doubles in column-major order. Tensors are written in name order.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const CheckpointManifest& manifest);

struct LoadedCheckpoint {
  CheckpointManifest manifest;
  ModelState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace moincl
