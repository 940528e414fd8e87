#pragma once

#include <filesystem>

#include "piro/encoder.hpp"
#include "piro/trainer.hpp"

namespace piro {

struct Checkpoint {
    EncoderParams encoder;
    ClassifierParams classifier;
    AdamState optimizer;
};

// Versioned JSON record of all weight tensors, dims, dropout rate, and
// optimizer state. 64-bit values round-trip bit-exactly (shortest
// round-trip decimal form); identical state serializes to identical bytes.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace piro
