#pragma once

#include <string>
#include <vector>

#include "jobvec/training.hpp"

namespace jobvec {

inline constexpr char kCheckpointMagic[8] = {'J', 'B', 'T', '1', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: 8-byte magic, 4-byte little-endian manifest length,
/// JSON manifest (tensor names/shapes/offsets plus hyperparameters and the
/// tokenizer vocabulary), then the raw tensor blob. Model tensors are stored
/// as binary32, Adagrad accumulators as binary64.
std::vector<uint8_t> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

/// Digest of the serialized bytes; stable across save/load cycles.
uint64_t checkpoint_digest(const Model& model);

}  // namespace jobvec
