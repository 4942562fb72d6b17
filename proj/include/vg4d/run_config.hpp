// SPDX-License-Identifier: Apache-2.0
//
// The resolved configuration of one CLI run: every knob of every pipeline
// stage in one validated, serializable record. Defaults are the reference
// training recipe; the bundled demo configs override them for the synthetic
// desk-scale datasets.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vg4d/align.hpp"
#include "vg4d/data.hpp"
#include "vg4d/infer.hpp"
#include "vg4d/model.hpp"

namespace vg4d {

/// Synthetic dataset shape for `synth-data`.
struct DataConfig {
  int num_classes = 8;
  int samples_per_class = 40;
  int train_per_class = 32;  // remainder becomes the test split
  int frames_per_video = 8;
  int points_per_frame = 64;
  double noise_sigma = 0.0;

  void validate() const {
    if (num_classes < 1 || samples_per_class < 1 || frames_per_video < 1 || points_per_frame < 1)
      throw ConfigError("data: all counts must be >= 1");
    if (train_per_class < 0 || train_per_class > samples_per_class)
      throw ConfigError("data: train_per_class outside [0, samples_per_class]");
    if (noise_sigma < 0) throw ConfigError("data: noise_sigma must be >= 0");
  }
};

/// Synthetic embedding store shape for `synth-embed`.
struct EmbedConfig {
  int dim = 0;  // 0 falls back to model.embed_dim
  double sigma_emb = 0.1;

  void validate() const {
    if (dim < 0) throw ConfigError("embed: dim must be >= 0");
    if (sigma_emb < 0) throw ConfigError("embed: sigma_emb must be >= 0");
  }
};

/// Filesystem inputs and outputs shared across subcommands. All of these can
/// come from the config file or from flags; relative paths are taken as-is
/// (relative to the working directory).
struct PathsConfig {
  std::string manifest;         // dataset manifest (jsonl)
  std::string store;            // embedding store directory
  std::string checkpoint;       // model checkpoint (input for eval, output for training)
  std::string init_checkpoint;  // warm start for finetune
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  bool deterministic = true;  // accepted for interface stability; execution is always single-threaded
  bool random_frame_sampling = true;
  double logit_scale = 1.0;

  DataConfig data;
  EmbedConfig embed;
  PathsConfig paths;
  ImPstNetConfig model;
  PipelineConfig pipeline{23, 2, 2048};
  TrainSchedule pretrain{120, 0.01, 0.0, 0.1, 32, 0.9, LrDecay::kCosine, 0};
  TrainSchedule finetune;  // 30 epochs, 0.001 -> 0.0001, cosine
  LossWeights loss;
  FusionWeights fusion;
  ChannelMask channels;

  RunConfig() {
    model.radius = {0.1, 0.2};  // grouping radius of the reference recipe, doubled per stage
  }

  void validate() const {
    data.validate();
    embed.validate();
    model.validate();
    pretrain.validate();
    finetune.validate();
    loss.validate();
    fusion.validate();
    if (pipeline.clip_len < 0 || pipeline.frame_stride < 1 || pipeline.points_per_frame < 0)
      throw ConfigError("pipeline: need clip_len >= 0, frame_stride >= 1, points_per_frame >= 0");
    if (logit_scale <= 0) throw ConfigError("logit_scale must be positive");
  }
};

/// Parses a config file. Unknown keys, type mismatches, and structural
/// problems raise ConfigError naming the dotted key path; malformed JSON
/// raises ConfigError with the line number.
RunConfig load_run_config(const std::string& path);

/// Applies one `--set key.path=value` override onto a config. The value is
/// parsed as JSON when possible and treated as a string otherwise.
void apply_override(RunConfig& cfg, const std::string& spec);

/// Full round-trippable serialization; load_run_config(dump) == cfg.
std::string run_config_to_json(const RunConfig& cfg);

/// Writes the resolved config into dir/config.json, creating dir if needed.
void write_resolved_config(const std::string& dir, const RunConfig& cfg);

}  // namespace vg4d
