#pragma once

#include "mtlab/mtlnet/dataset.hpp"
#include "mtlab/mtlnet/model.hpp"

#include <filesystem>
#include <json.hpp>

namespace mtlab::mtlnet {

nlohmann::json task_to_json(const TaskSpec& t);
TaskSpec task_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const BranchedModel& m);
BranchedModel model_from_json(const nlohmann::json& j);

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

// Round-trips are exact: doubles are serialized losslessly.
void save_model(const std::filesystem::path& path, const BranchedModel& m);
BranchedModel load_model(const std::filesystem::path& path);

nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace mtlab::mtlnet
