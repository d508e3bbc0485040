#pragma once

#include <string>

#include "dkbo/experiment.hpp"

namespace dkbo {

// JSON config mirroring ExperimentConfig; missing keys keep their defaults,
// which match the benchmark protocol values.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

} // namespace dkbo
