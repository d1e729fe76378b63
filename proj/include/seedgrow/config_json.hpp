#pragma once

#include "seedgrow/evaluation.hpp"
#include "seedgrow/hdbscan.hpp"
#include "seedgrow/lift_grow_merge.hpp"
#include "seedgrow/mask_filter.hpp"
#include "seedgrow/oversegment.hpp"
#include "seedgrow/projection.hpp"

#include <nlohmann/json.hpp>

namespace seedgrow {

// Module configs as JSON objects. Readers start from the defaults, accept a
// subset of keys and throw ConfigError on unknown keys or wrong types.

nlohmann::json to_json(const MappingConfig& c);
nlohmann::json to_json(const FilterConfig& c);
nlohmann::json to_json(const ClusterConfig& c);
nlohmann::json to_json(const OversegConfig& c);
nlohmann::json to_json(const GrowConfig& c);
nlohmann::json to_json(const MergeSchedule& c);

void from_json_into(const nlohmann::json& j, MappingConfig& c);
void from_json_into(const nlohmann::json& j, FilterConfig& c);
void from_json_into(const nlohmann::json& j, ClusterConfig& c);
void from_json_into(const nlohmann::json& j, OversegConfig& c);
void from_json_into(const nlohmann::json& j, GrowConfig& c);
void from_json_into(const nlohmann::json& j, MergeSchedule& c);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace seedgrow
