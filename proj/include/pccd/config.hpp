#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pccd/eval.hpp"
#include "pccd/trainer.hpp"

namespace pccd {

using KeyValues = std::map<std::string, std::string>;

// `key = value` lines; `#` starts a comment. Throws on malformed lines or
// repeated keys.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

// Unknown keys are rejected so typos do not silently fall back to defaults.
PlantConfig plant_config_from(const KeyValues& values, PlantConfig base = {});
TrainConfig train_config_from(const KeyValues& values, TrainConfig base = {});

// Training keys plus delta, train_per_label and test_per_label. `seed` sets
// both the experiment seed and the training seed; `experiment_seed` then
// overrides the former.
ExperimentConfig experiment_config_from(const KeyValues& values, ExperimentConfig base = {});

std::string to_key_values(const PlantConfig& config);
std::string to_key_values(const TrainConfig& config);
std::string to_key_values(const ExperimentConfig& config);

}  // namespace pccd
