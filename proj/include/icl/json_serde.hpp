#pragma once

#include "icl/model.hpp"
#include "json.hpp"

namespace icl::model {

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace icl::model
