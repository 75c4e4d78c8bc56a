#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "clef/model/encoders.hpp"
#include "clef/train/optim.hpp"
#include "json.hpp"

namespace clef::train {

// Binary layout (little endian):
//   "CLEF" u8 version=1
//   u32 tensor count
//   per tensor: u16 name length, name bytes, u8 rank, rank x u32 dims, f32 payload
//   u32 metadata length, metadata JSON (fingerprint, step, seed, arch, ...)
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, num::Tensor> tensors;
  nlohmann::json meta;

  std::string fingerprint() const { return meta.value("fingerprint", std::string{}); }
};

nlohmann::json to_json(const model::ArchConfig& arch);
model::ArchConfig arch_from_json(const nlohmann::json& j);

// Parameters under their own names; optimizer moments under
// "optim.m.<name>" / "optim.v.<name>" when a state is given.
Checkpoint make_checkpoint(const model::ModelParams& params, const OptimState* state, nlohmann::json meta);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws IoError, FormatError (with the byte offset) or VersionError. Nothing
// is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every checkpoint tensor into `params`. The encoder fingerprint must
// match. A missing description tower is seeded from the text tower; other
// parameters absent from the checkpoint keep their values.
void restore_params(const Checkpoint& ckpt, model::ModelParams& params);

// Rebuilds the model recorded in the checkpoint metadata.
model::ModelParams params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace clef::train
