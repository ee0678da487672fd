#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "plrefine/harness.hpp"

namespace plr {

// JSON form of the run configuration. Objects nest the same way as the C++
// structs; per-category values are keyed "car", "pedestrian", "cyclist".
nlohmann::ordered_json config_to_json(const SelfTrainConfig& cfg);

// Missing keys keep their defaults. Unknown keys and wrongly typed values
// throw FormatError; out-of-range values throw InvalidArgument. A top-level
// "run" object (manifest metadata) is accepted and ignored.
SelfTrainConfig config_from_json(const nlohmann::ordered_json& j);

SelfTrainConfig load_config(const std::filesystem::path& path);

// Resolved config plus a "run" object, written so that loading it back
// reproduces the same run.
void store_manifest(const std::filesystem::path& path, const SelfTrainConfig& cfg, const nlohmann::ordered_json& run);

}  // namespace plr
