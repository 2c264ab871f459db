#pragma once

// Single-file checkpoint archive: format version, the model configuration as
// key-value text, named parameter arrays as little-endian float32 with shape
// headers, optimizer state, epoch/step counters and the trainer rng state.

#include <cstdint>
#include <string>

#include "glissando/model.hpp"

namespace glissando {

struct CheckpointMeta {
    int64_t epoch = 0;
    int64_t global_step = 0;
    std::string rng_state;
};

void save_checkpoint(const std::string& path, const GlissandoNet& model,
                     const CheckpointMeta& meta);

// Reads only the embedded ModelConfig (to construct a matching model).
ModelConfig read_checkpoint_config(const std::string& path);

// Loads parameters + optimizer state into a model built from the same config.
CheckpointMeta load_checkpoint(const std::string& path, GlissandoNet& model);

} // namespace glissando
