#pragma once

#include <cstdint>
#include <filesystem>

#include "star/model.hpp"
#include "star/tokenization.hpp"

namespace star {

/// A trained model plus what is needed to tokenize new clips the same way.
struct Checkpoint {
  ModelConfig model;
  BackboneConfig backbone;
  std::uint64_t seed = 0;           // run seed the weights came from
  std::uint64_t backbone_seed = 0;  // stub backbone projection seed
  StarModelParams params;
};

/// One STF file per named tensor ("enc.0.fattn.wq.stf") plus manifest.json
/// listing names, files, shapes, the configs and seeds.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);

/// Bitwise-exact reload. Throws FormatError on missing, extra or misshapen tensors.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace star
