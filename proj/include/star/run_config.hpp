#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "star/dataset.hpp"
#include "star/model.hpp"
#include "star/tokenization.hpp"
#include "star/training.hpp"

namespace star {

/// Everything a run depends on. All randomness derives from `seed` through the
/// named sub-seeds below.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  BackboneConfig backbone;
  DataConfig data;
  TrainConfig train;

  std::uint64_t data_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t shuffle_seed() const;
  std::uint64_t backbone_seed() const;

  /// Field checks plus cross-section consistency (joints, channels, classes,
  /// frame size vs. patch grid). Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys and wrong types throw
  /// ConfigError naming the key path.
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig parse(const std::string& text);
};

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const BackboneConfig& config);
nlohmann::json to_json(const DataConfig& config);
nlohmann::json to_json(const TrainConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc, const std::string& path = "model");
BackboneConfig backbone_config_from_json(const nlohmann::json& doc,
                                         const std::string& path = "backbone");
DataConfig data_config_from_json(const nlohmann::json& doc, const std::string& path = "data");
TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& path = "train");

}  // namespace star
