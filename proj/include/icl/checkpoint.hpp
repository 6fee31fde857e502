#pragma once

#include <filesystem>

#include "icl/model.hpp"

namespace icl::model {

// Checkpoint container format: magic + version, a JSON header describing
// config, tensor names/shapes, train_step and seed, then raw little-endian
// f64 payload. The header records the payload SHA-256; loads verify it.
inline constexpr char kCheckpointMagic[8] = {'I', 'C', 'L', 'C',
                                             'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Loads and validates a checkpoint. If expect is non-null the stored config
// must match it exactly.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig* expect = nullptr);

// Integrity check without constructing the checkpoint: re-hashes the
// payload against the header record. Throws IoError on any mismatch.
void verify_checkpoint_file(const std::filesystem::path& path);

}  // namespace icl::model
