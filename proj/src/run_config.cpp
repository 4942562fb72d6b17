// SPDX-License-Identifier: Apache-2.0
#include "vg4d/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vg4d {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void key_error(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

template <typename T>
void read_field(const json& j, const std::string& prefix, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;  // absent keys keep their defaults
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    key_error(join(prefix, key), "cannot convert value of type " + std::string(it->type_name()));
  }
}

void check_keys(const json& j, const std::string& prefix, std::initializer_list<const char*> known) {
  if (!j.is_object()) key_error(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) key_error(join(prefix, key), "unknown key");
  }
}

void read_decay(const json& j, const std::string& prefix, LrDecay& out) {
  auto it = j.find("decay");
  if (it == j.end()) return;
  std::string s;
  try {
    s = it->get<std::string>();
  } catch (const json::exception&) {
    key_error(join(prefix, "decay"), "expected a string");
  }
  if (s == "cosine") {
    out = LrDecay::kCosine;
  } else if (s == "step") {
    out = LrDecay::kStep;
  } else {
    key_error(join(prefix, "decay"), "expected \"cosine\" or \"step\", got \"" + s + "\"");
  }
}

void read_schedule(const json& j, const std::string& prefix, TrainSchedule& s) {
  check_keys(j, prefix,
             {"epochs", "lr_init", "lr_final", "weight_decay", "batch_size", "momentum", "decay", "step_size"});
  read_field(j, prefix, "epochs", s.epochs);
  read_field(j, prefix, "lr_init", s.lr_init);
  read_field(j, prefix, "lr_final", s.lr_final);
  read_field(j, prefix, "weight_decay", s.weight_decay);
  read_field(j, prefix, "batch_size", s.batch_size);
  read_field(j, prefix, "momentum", s.momentum);
  read_decay(j, prefix, s.decay);
  read_field(j, prefix, "step_size", s.step_size);
}

void from_json_strict(const json& j, RunConfig& cfg) {
  check_keys(j, "",
             {"seed", "output_dir", "deterministic", "random_frame_sampling", "logit_scale", "data", "embed",
              "paths", "model", "pipeline", "pretrain", "finetune", "loss", "fusion", "channels"});
  read_field(j, "", "seed", cfg.seed);
  read_field(j, "", "output_dir", cfg.output_dir);
  read_field(j, "", "deterministic", cfg.deterministic);
  read_field(j, "", "random_frame_sampling", cfg.random_frame_sampling);
  read_field(j, "", "logit_scale", cfg.logit_scale);

  if (auto it = j.find("data"); it != j.end()) {
    check_keys(*it, "data",
               {"num_classes", "samples_per_class", "train_per_class", "frames_per_video", "points_per_frame",
                "noise_sigma"});
    read_field(*it, "data", "num_classes", cfg.data.num_classes);
    read_field(*it, "data", "samples_per_class", cfg.data.samples_per_class);
    read_field(*it, "data", "train_per_class", cfg.data.train_per_class);
    read_field(*it, "data", "frames_per_video", cfg.data.frames_per_video);
    read_field(*it, "data", "points_per_frame", cfg.data.points_per_frame);
    read_field(*it, "data", "noise_sigma", cfg.data.noise_sigma);
  }
  if (auto it = j.find("embed"); it != j.end()) {
    check_keys(*it, "embed", {"dim", "sigma_emb"});
    read_field(*it, "embed", "dim", cfg.embed.dim);
    read_field(*it, "embed", "sigma_emb", cfg.embed.sigma_emb);
  }
  if (auto it = j.find("paths"); it != j.end()) {
    check_keys(*it, "paths", {"manifest", "store", "checkpoint", "init_checkpoint"});
    read_field(*it, "paths", "manifest", cfg.paths.manifest);
    read_field(*it, "paths", "store", cfg.paths.store);
    read_field(*it, "paths", "checkpoint", cfg.paths.checkpoint);
    read_field(*it, "paths", "init_checkpoint", cfg.paths.init_checkpoint);
  }
  if (auto it = j.find("model"); it != j.end()) {
    check_keys(*it, "model",
               {"spatial_subsample_rate", "mlp_widths", "radius", "k_nbr", "temporal_radius", "num_classes",
                "embed_dim", "normalize_offsets", "include_center_feature", "pool_frames"});
    read_field(*it, "model", "spatial_subsample_rate", cfg.model.spatial_subsample_rate);
    read_field(*it, "model", "mlp_widths", cfg.model.mlp_widths);
    read_field(*it, "model", "radius", cfg.model.radius);
    read_field(*it, "model", "k_nbr", cfg.model.k_nbr);
    read_field(*it, "model", "temporal_radius", cfg.model.temporal_radius);
    read_field(*it, "model", "num_classes", cfg.model.num_classes);
    read_field(*it, "model", "embed_dim", cfg.model.embed_dim);
    read_field(*it, "model", "normalize_offsets", cfg.model.normalize_offsets);
    read_field(*it, "model", "include_center_feature", cfg.model.include_center_feature);
    read_field(*it, "model", "pool_frames", cfg.model.pool_frames);
  }
  if (auto it = j.find("pipeline"); it != j.end()) {
    check_keys(*it, "pipeline", {"clip_len", "frame_stride", "points_per_frame"});
    read_field(*it, "pipeline", "clip_len", cfg.pipeline.clip_len);
    read_field(*it, "pipeline", "frame_stride", cfg.pipeline.frame_stride);
    read_field(*it, "pipeline", "points_per_frame", cfg.pipeline.points_per_frame);
  }
  if (auto it = j.find("pretrain"); it != j.end()) read_schedule(*it, "pretrain", cfg.pretrain);
  if (auto it = j.find("finetune"); it != j.end()) read_schedule(*it, "finetune", cfg.finetune);
  if (auto it = j.find("loss"); it != j.end()) {
    check_keys(*it, "loss", {"alpha", "beta", "theta", "gamma"});
    read_field(*it, "loss", "alpha", cfg.loss.alpha);
    read_field(*it, "loss", "beta", cfg.loss.beta);
    read_field(*it, "loss", "theta", cfg.loss.theta);
    read_field(*it, "loss", "gamma", cfg.loss.gamma);
  }
  if (auto it = j.find("fusion"); it != j.end()) {
    check_keys(*it, "fusion", {"w_pc", "w_pc_text", "w_rgb", "w_rgb_text"});
    read_field(*it, "fusion", "w_pc", cfg.fusion.w_pc);
    read_field(*it, "fusion", "w_pc_text", cfg.fusion.w_pc_text);
    read_field(*it, "fusion", "w_rgb", cfg.fusion.w_rgb);
    read_field(*it, "fusion", "w_rgb_text", cfg.fusion.w_rgb_text);
  }
  if (auto it = j.find("channels"); it != j.end()) {
    check_keys(*it, "channels", {"pc", "pc_text", "rgb", "rgb_text"});
    read_field(*it, "channels", "pc", cfg.channels.pc);
    read_field(*it, "channels", "pc_text", cfg.channels.pc_text);
    read_field(*it, "channels", "rgb", cfg.channels.rgb);
    read_field(*it, "channels", "rgb_text", cfg.channels.rgb_text);
  }
}

int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ":" + std::to_string(line_of_byte(text, e.byte)) + ": invalid JSON: " + e.what());
  }
  RunConfig cfg;
  from_json_strict(j, cfg);
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key.path=value, got '" + spec + "'");
  const std::string key = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);

  json j = json::parse(run_config_to_json(cfg));
  std::string pointer = "/";
  for (char c : key) pointer += (c == '.') ? '/' : c;
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings need no quoting
  }
  try {
    j[json::json_pointer(pointer)] = parsed;
  } catch (const json::exception& e) {
    throw ConfigError("--set " + key + ": " + e.what());
  }
  RunConfig next;
  from_json_strict(j, next);
  cfg = next;
}

std::string run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["deterministic"] = cfg.deterministic;
  j["random_frame_sampling"] = cfg.random_frame_sampling;
  j["logit_scale"] = cfg.logit_scale;
  j["data"] = {{"num_classes", cfg.data.num_classes},
               {"samples_per_class", cfg.data.samples_per_class},
               {"train_per_class", cfg.data.train_per_class},
               {"frames_per_video", cfg.data.frames_per_video},
               {"points_per_frame", cfg.data.points_per_frame},
               {"noise_sigma", cfg.data.noise_sigma}};
  j["embed"] = {{"dim", cfg.embed.dim}, {"sigma_emb", cfg.embed.sigma_emb}};
  j["paths"] = {{"manifest", cfg.paths.manifest},
                {"store", cfg.paths.store},
                {"checkpoint", cfg.paths.checkpoint},
                {"init_checkpoint", cfg.paths.init_checkpoint}};
  j["model"] = {{"spatial_subsample_rate", cfg.model.spatial_subsample_rate},
                {"mlp_widths", cfg.model.mlp_widths},
                {"radius", cfg.model.radius},
                {"k_nbr", cfg.model.k_nbr},
                {"temporal_radius", cfg.model.temporal_radius},
                {"num_classes", cfg.model.num_classes},
                {"embed_dim", cfg.model.embed_dim},
                {"normalize_offsets", cfg.model.normalize_offsets},
                {"include_center_feature", cfg.model.include_center_feature},
                {"pool_frames", cfg.model.pool_frames}};
  j["pipeline"] = {{"clip_len", cfg.pipeline.clip_len},
                   {"frame_stride", cfg.pipeline.frame_stride},
                   {"points_per_frame", cfg.pipeline.points_per_frame}};
  const auto schedule_json = [](const TrainSchedule& s) {
    return ordered_json{{"epochs", s.epochs},
                        {"lr_init", s.lr_init},
                        {"lr_final", s.lr_final},
                        {"weight_decay", s.weight_decay},
                        {"batch_size", s.batch_size},
                        {"momentum", s.momentum},
                        {"decay", s.decay == LrDecay::kCosine ? "cosine" : "step"},
                        {"step_size", s.step_size}};
  };
  j["pretrain"] = schedule_json(cfg.pretrain);
  j["finetune"] = schedule_json(cfg.finetune);
  j["loss"] = {{"alpha", cfg.loss.alpha}, {"beta", cfg.loss.beta}, {"theta", cfg.loss.theta},
               {"gamma", cfg.loss.gamma}};
  j["fusion"] = {{"w_pc", cfg.fusion.w_pc},
                 {"w_pc_text", cfg.fusion.w_pc_text},
                 {"w_rgb", cfg.fusion.w_rgb},
                 {"w_rgb_text", cfg.fusion.w_rgb_text}};
  j["channels"] = {{"pc", cfg.channels.pc},
                   {"pc_text", cfg.channels.pc_text},
                   {"rgb", cfg.channels.rgb},
                   {"rgb_text", cfg.channels.rgb_text}};
  return j.dump(2) + "\n";
}

void write_resolved_config(const std::string& dir, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / "config.json").string();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << run_config_to_json(cfg);
  if (!os) throw DataError("write failure on " + path);
}

}  // namespace vg4d
