#pragma once

// Versioned little-endian checkpoint: magic, format version, an embedded
// config snapshot, a named-tensor table (FP32, row-major), and a
// training-state footer (epoch, global step, optimizer moments). Loading and
// re-saving reproduces the file byte-for-byte.

#include <cstdint>
#include <string>

#include "trajcast/ad.hpp"

namespace trajcast {

struct CheckpointState {
  std::string config_text;  // key-value config snapshot
  int epoch = 0;
  std::int64_t global_step = 0;
  bool has_opt_state = false;
};

void save_checkpoint(const std::string& path, const ad::ParamStore& store,
                     const CheckpointState& state);

// Fills an existing registry (names and shapes must match the file).
CheckpointState load_checkpoint(const std::string& path, ad::ParamStore& store);

// Header only: enough to rebuild the registry from the embedded config.
CheckpointState peek_checkpoint(const std::string& path);

}  // namespace trajcast
