// Internal JSON helpers shared by checkpoint and config parsing.
#pragma once

#include <set>
#include <string>

#include "flowstate/model.hpp"
#include "json.hpp"

namespace flowstate::detail {

using json = nlohmann::json;

/// Throws std::invalid_argument when `j` holds keys outside `allowed`.
void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where);

json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const json& j);

}  // namespace flowstate::detail
