#include "seedgrow/config_json.hpp"

#include "seedgrow/errors.hpp"

#include <string>

namespace seedgrow {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + ": wrong type");
  }
}

}  // namespace

json to_json(const MappingConfig& c) {
  return {{"tau_vis", c.tau_vis}, {"strategy", std::string(to_string(c.strategy))}, {"splat_radius", c.splat_radius}};
}

json to_json(const FilterConfig& c) {
  return {{"score_threshold", c.score_threshold},
          {"inclusion_fraction", c.inclusion_fraction},
          {"normalization", std::string(to_string(c.normalization))}};
}

json to_json(const ClusterConfig& c) {
  return {{"min_cluster_size", c.min_cluster_size}, {"min_samples", c.min_samples}};
}

json to_json(const OversegConfig& c) {
  return {{"k_neighbors", c.k_neighbors}, {"merge_threshold", c.merge_threshold},
          {"min_segment_size", c.min_segment_size}};
}

json to_json(const GrowConfig& c) {
  return {{"affinity_floor", c.affinity_floor}, {"max_iterations", c.max_iterations},
          {"adjacency_k", c.adjacency_k}, {"exclusive_claims", c.exclusive_claims}};
}

json to_json(const MergeSchedule& c) { return c.thresholds; }

void from_json_into(const json& j, MappingConfig& c) {
  reject_unknown_keys(j, {"tau_vis", "strategy", "splat_radius"}, "mapping");
  read(j, "tau_vis", c.tau_vis, "mapping");
  read(j, "splat_radius", c.splat_radius, "mapping");
  std::string s;
  read(j, "strategy", s, "mapping");
  if (!s.empty()) c.strategy = visibility_strategy_from_string(s);
}

void from_json_into(const json& j, FilterConfig& c) {
  reject_unknown_keys(j, {"score_threshold", "inclusion_fraction", "normalization"}, "filter");
  read(j, "score_threshold", c.score_threshold, "filter");
  read(j, "inclusion_fraction", c.inclusion_fraction, "filter");
  std::string s;
  read(j, "normalization", s, "filter");
  if (!s.empty()) c.normalization = score_normalization_from_string(s);
}

void from_json_into(const json& j, ClusterConfig& c) {
  reject_unknown_keys(j, {"min_cluster_size", "min_samples"}, "cluster");
  read(j, "min_cluster_size", c.min_cluster_size, "cluster");
  read(j, "min_samples", c.min_samples, "cluster");
}

void from_json_into(const json& j, OversegConfig& c) {
  reject_unknown_keys(j, {"k_neighbors", "merge_threshold", "min_segment_size"}, "overseg");
  read(j, "k_neighbors", c.k_neighbors, "overseg");
  read(j, "merge_threshold", c.merge_threshold, "overseg");
  read(j, "min_segment_size", c.min_segment_size, "overseg");
}

void from_json_into(const json& j, GrowConfig& c) {
  reject_unknown_keys(j, {"affinity_floor", "max_iterations", "adjacency_k", "exclusive_claims"}, "grow");
  read(j, "affinity_floor", c.affinity_floor, "grow");
  read(j, "max_iterations", c.max_iterations, "grow");
  read(j, "adjacency_k", c.adjacency_k, "grow");
  read(j, "exclusive_claims", c.exclusive_claims, "grow");
}

void from_json_into(const json& j, MergeSchedule& c) {
  if (!j.is_array()) throw ConfigError("merge_schedule: expected an array of thresholds");
  try {
    c.thresholds = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError("merge_schedule: thresholds must be numbers");
  }
}

}  // namespace seedgrow
