// SPDX-License-Identifier: Apache-2.0
#include "vg4d/model.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vg4d {

std::string config_to_json(const ImPstNetConfig& cfg) {
  nlohmann::ordered_json j;
  j["spatial_subsample_rate"] = cfg.spatial_subsample_rate;
  j["mlp_widths"] = cfg.mlp_widths;
  j["radius"] = cfg.radius;
  j["k_nbr"] = cfg.k_nbr;
  j["temporal_radius"] = cfg.temporal_radius;
  j["num_classes"] = cfg.num_classes;
  j["embed_dim"] = cfg.embed_dim;
  j["normalize_offsets"] = cfg.normalize_offsets;
  j["include_center_feature"] = cfg.include_center_feature;
  j["pool_frames"] = cfg.pool_frames;
  return j.dump(2) + "\n";
}

ImPstNetConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
  }
  ImPstNetConfig cfg;
  try {
    cfg.spatial_subsample_rate = j.at("spatial_subsample_rate").get<std::vector<int>>();
    cfg.mlp_widths = j.at("mlp_widths").get<std::vector<std::vector<int>>>();
    cfg.radius = j.at("radius").get<std::vector<double>>();
    cfg.k_nbr = j.at("k_nbr").get<int>();
    cfg.temporal_radius = j.at("temporal_radius").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.normalize_offsets = j.at("normalize_offsets").get<bool>();
    cfg.include_center_feature = j.at("include_center_feature").get<bool>();
    cfg.pool_frames = j.value("pool_frames", 0);  // absent in older sidecars
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: missing or mistyped field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_config(const std::string& path, const ImPstNetConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << config_to_json(cfg);
  if (!os) throw DataError("write failure on " + path);
}

ImPstNetConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace vg4d
