// SPDX-License-Identifier: Apache-2.0
//
// Single CLI over the whole pipeline. Option precedence, lowest to highest:
// built-in defaults, --config file, --set overrides, dedicated flags.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vg4d/commands.hpp"

namespace {

struct CliState {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string manifest;
  std::string store;
  std::string checkpoint;
  std::string init_checkpoint;
  std::optional<bool> deterministic;
  std::optional<int> epochs;
  std::vector<double> weights;
  std::vector<std::string> channels;
  std::vector<std::string> toggles;
  int gradcheck_seeds = 100;
  int oracle_instances = 200;
};

void add_common(CLI::App* sub, CliState& st) {
  sub->add_option("--config", st.config_file, "JSON config file");
  sub->add_option("--set", st.sets, "override one config key, e.g. --set pretrain.epochs=5")
      ->take_all();
  sub->add_option("--seed", st.seed, "rng seed");
  sub->add_option("--output-dir", st.output_dir, "directory for artifacts and the resolved config");
  sub->add_flag("--deterministic,!--no-deterministic", st.deterministic,
                "single-threaded bit-exact mode (execution is always single-threaded)");
}

vg4d::RunConfig resolve(const CliState& st) {
  vg4d::RunConfig cfg;
  if (!st.config_file.empty()) cfg = vg4d::load_run_config(st.config_file);
  for (const std::string& s : st.sets) vg4d::apply_override(cfg, s);
  if (st.seed) cfg.seed = *st.seed;
  if (!st.output_dir.empty()) cfg.output_dir = st.output_dir;
  if (!st.manifest.empty()) cfg.paths.manifest = st.manifest;
  if (!st.store.empty()) cfg.paths.store = st.store;
  if (!st.checkpoint.empty()) cfg.paths.checkpoint = st.checkpoint;
  if (!st.init_checkpoint.empty()) cfg.paths.init_checkpoint = st.init_checkpoint;
  if (st.deterministic) cfg.deterministic = *st.deterministic;
  if (!st.weights.empty()) {
    if (st.weights.size() != 4)
      throw vg4d::ConfigError("--weights expects 4 comma-separated values (pc,pc_text,rgb,rgb_text)");
    cfg.fusion = {st.weights[0], st.weights[1], st.weights[2], st.weights[3]};
  }
  if (!st.channels.empty()) {
    cfg.channels = {false, false, false, false};
    for (const std::string& c : st.channels) {
      if (c == "pc") {
        cfg.channels.pc = true;
      } else if (c == "pc_text") {
        cfg.channels.pc_text = true;
      } else if (c == "rgb") {
        cfg.channels.rgb = true;
      } else if (c == "rgb_text") {
        cfg.channels.rgb_text = true;
      } else {
        throw vg4d::ConfigError("--channels: unknown channel '" + c +
                                "' (expected pc, pc_text, rgb, rgb_text)");
      }
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D point-cloud-video action recognition pipeline"};
  app.require_subcommand(1);
  CliState st;

  CLI::App* s_data = app.add_subcommand("synth-data", "generate a labeled synthetic motion dataset");
  add_common(s_data, st);

  CLI::App* s_embed = app.add_subcommand("synth-embed", "generate a frozen text/video embedding store");
  add_common(s_embed, st);
  s_embed->add_option("--manifest", st.manifest, "dataset manifest (jsonl)");

  CLI::App* s_pre = app.add_subcommand("pretrain", "train the 4D encoder classifier from scratch");
  add_common(s_pre, st);
  s_pre->add_option("--manifest", st.manifest, "dataset manifest (jsonl)");
  s_pre->add_option("--checkpoint", st.checkpoint, "checkpoint output path");
  s_pre->add_option("--epochs", st.epochs, "override pretrain.epochs");

  CLI::App* s_fine = app.add_subcommand("finetune", "cross-modal finetune from a pretrained checkpoint");
  add_common(s_fine, st);
  s_fine->add_option("--manifest", st.manifest, "dataset manifest (jsonl)");
  s_fine->add_option("--store", st.store, "embedding store directory");
  s_fine->add_option("--init-checkpoint", st.init_checkpoint, "pretrained checkpoint to start from");
  s_fine->add_option("--checkpoint", st.checkpoint, "checkpoint output path");
  s_fine->add_option("--epochs", st.epochs, "override finetune.epochs");

  CLI::App* s_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(s_eval, st);
  s_eval->add_option("--manifest", st.manifest, "dataset manifest (jsonl)");
  s_eval->add_option("--checkpoint", st.checkpoint, "checkpoint to evaluate");
  s_eval->add_option("--store", st.store, "embedding store directory (omit for PC-only)");
  s_eval->add_option("--weights", st.weights, "fusion weights pc,pc_text,rgb,rgb_text")->delimiter(',');
  s_eval->add_option("--channels", st.channels, "channel subset, e.g. pc,pc_text")->delimiter(',');

  CLI::App* s_abl = app.add_subcommand("ablate", "additive ablation table over training refinements");
  add_common(s_abl, st);
  s_abl->add_option("--manifest", st.manifest, "dataset manifest (jsonl)");
  s_abl->add_option("--toggles", st.toggles, "toggle order (default: all four)")->delimiter(',');
  s_abl->add_option("--epochs", st.epochs, "override pretrain.epochs");

  CLI::App* s_grad = app.add_subcommand("gradcheck", "finite-difference checks of every op and the full loss");
  add_common(s_grad, st);
  s_grad->add_option("--seeds", st.gradcheck_seeds, "random seeds per check (default 100)");

  CLI::App* s_oracle = app.add_subcommand("oracle-check", "brute-force equivalence and identity suites");
  add_common(s_oracle, st);
  s_oracle->add_option("--instances", st.oracle_instances, "instances per oracle suite (default 200)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    vg4d::RunConfig cfg = resolve(st);
    if (s_data->parsed()) return vg4d::cmd::synth_data(cfg);
    if (s_embed->parsed()) return vg4d::cmd::synth_embed(cfg);
    if (s_pre->parsed()) {
      if (st.epochs) cfg.pretrain.epochs = *st.epochs;
      cfg.validate();
      return vg4d::cmd::pretrain(cfg);
    }
    if (s_fine->parsed()) {
      if (st.epochs) cfg.finetune.epochs = *st.epochs;
      cfg.validate();
      return vg4d::cmd::finetune(cfg);
    }
    if (s_eval->parsed()) return vg4d::cmd::evaluate(cfg);
    if (s_abl->parsed()) {
      if (st.epochs) cfg.pretrain.epochs = *st.epochs;
      cfg.validate();
      return vg4d::cmd::ablate(cfg, st.toggles);
    }
    if (s_grad->parsed()) return vg4d::cmd::gradcheck(cfg, st.gradcheck_seeds);
    if (s_oracle->parsed()) return vg4d::cmd::oracle_check(cfg, st.oracle_instances);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const vg4d::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vg4d::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const vg4d::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const vg4d::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const vg4d::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
