// SPDX-License-Identifier: Apache-2.0
#include "vg4d/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "vg4d/selfcheck.hpp"

namespace vg4d::cmd {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string(what) + " is required but not set");
  return value;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw DataError("write failure on " + path);
}

void write_summary(const std::string& dir, const ordered_json& j) {
  write_text((fs::path(dir) / "summary.json").string(), j.dump(2) + "\n");
}

/// Loads every sample of one split, in manifest order, cross-checking the
/// stored id and label against the manifest entry.
std::vector<PointCloudVideo<float>> load_split(const std::string& manifest_path, const std::string& split) {
  std::vector<PointCloudVideo<float>> out;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    if (e.split != split) continue;
    PointCloudVideo<float> pcv = load_pcv(resolve_manifest_path(manifest_path, e.path));
    if (pcv.sample_id != e.id)
      throw DataError("manifest id '" + e.id + "' disagrees with stored id '" + pcv.sample_id + "'");
    if (pcv.label != e.label)
      throw DataError("manifest label for '" + e.id + "' disagrees with the stored label");
    out.push_back(std::move(pcv));
  }
  if (out.empty()) throw DataError(manifest_path + ": no samples in split '" + split + "'");
  return out;
}

TrainOptions train_options(const RunConfig& cfg, const TrainSchedule& schedule, const std::string& checkpoint) {
  TrainOptions opts;
  opts.schedule = schedule;
  opts.weights = cfg.loss;
  opts.pipeline = cfg.pipeline;
  opts.seed = cfg.seed;
  opts.random_frame_sampling = cfg.random_frame_sampling;
  opts.logit_scale = cfg.logit_scale;
  opts.metrics_path = (fs::path(cfg.output_dir) / "metrics.csv").string();
  opts.checkpoint_path = checkpoint;
  return opts;
}

int report_checks(const RunConfig& cfg, const char* command, const std::vector<selfcheck::CheckResult>& results) {
  bool all_pass = true;
  ordered_json rows = ordered_json::array();
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  err=" << r.err << " tol=" << r.tol
              << (r.detail.empty() ? "" : "  (" + r.detail + ")") << "\n";
    rows.push_back(ordered_json{
        {"name", r.name}, {"err", r.err}, {"tol", r.tol}, {"pass", r.pass}, {"detail", r.detail}});
  }
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    write_text((fs::path(cfg.output_dir) / (std::string(command) + ".json")).string(),
               ordered_json{{"command", command}, {"pass", all_pass}, {"results", rows}}.dump(2) + "\n");
    write_resolved_config(cfg.output_dir, cfg);
  }
  std::cout << (all_pass ? "all checks passed" : "CHECKS FAILED") << "\n";
  return all_pass ? 0 : 5;
}

}  // namespace

int synth_data(const RunConfig& cfg) {
  require(cfg.output_dir, "output_dir");
  SynthSpec spec;
  spec.num_classes = cfg.data.num_classes;
  spec.samples_per_class = cfg.data.samples_per_class;
  spec.frames_per_video = cfg.data.frames_per_video;
  spec.points_per_frame = cfg.data.points_per_frame;
  spec.noise_sigma = cfg.data.noise_sigma;
  spec.rng_seed = cfg.seed;

  const std::vector<PointCloudVideo<float>> samples = generate_synthetic<float>(spec);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out / "samples");

  std::vector<ManifestEntry> entries;
  entries.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const int within_class = static_cast<int>(i) % cfg.data.samples_per_class;
    ManifestEntry e;
    e.id = s.sample_id;
    e.path = "samples/" + s.sample_id + ".pcv";
    e.label = s.label;
    e.split = within_class < cfg.data.train_per_class ? "train" : "test";
    save_pcv((out / e.path).string(), s);
    entries.push_back(std::move(e));
  }
  const std::string manifest = (out / "manifest.jsonl").string();
  write_manifest(manifest, entries);

  RunConfig resolved = cfg;
  resolved.paths.manifest = manifest;
  write_resolved_config(cfg.output_dir, resolved);
  write_summary(cfg.output_dir, ordered_json{{"command", "synth-data"},
                                             {"samples", samples.size()},
                                             {"num_classes", cfg.data.num_classes},
                                             {"train_per_class", cfg.data.train_per_class},
                                             {"manifest", manifest}});
  std::cout << "wrote " << samples.size() << " samples and " << manifest << "\n";
  return 0;
}

int synth_embed(const RunConfig& cfg) {
  require(cfg.output_dir, "output_dir");
  const std::string manifest = require(cfg.paths.manifest, "paths.manifest");
  const int dim = cfg.embed.dim > 0 ? cfg.embed.dim : cfg.model.embed_dim;
  const int num_classes = cfg.model.num_classes;

  std::vector<std::pair<std::string, int>> samples;
  for (const ManifestEntry& e : read_manifest(manifest)) {
    if (e.label < 0 || e.label >= num_classes)
      throw DataError(manifest + ": sample '" + e.id + "' labels class " + std::to_string(e.label) +
                      ", expected [0," + std::to_string(num_classes) + ")");
    samples.emplace_back(e.id, e.label);
  }
  for (std::size_t i = 1; i < samples.size(); ++i)
    for (std::size_t p = 0; p < i; ++p)
      if (samples[i].first == samples[p].first)
        throw DataError(manifest + ": duplicate sample id '" + samples[i].first + "'");

  const EmbeddingStore store = synth_embeddings(num_classes, dim, samples, cfg.embed.sigma_emb, cfg.seed);
  const std::string store_dir = (fs::path(cfg.output_dir) / "store").string();
  store.save(store_dir);

  RunConfig resolved = cfg;
  resolved.paths.store = store_dir;
  write_resolved_config(cfg.output_dir, resolved);
  write_summary(cfg.output_dir, ordered_json{{"command", "synth-embed"},
                                             {"num_classes", num_classes},
                                             {"dim", dim},
                                             {"samples", samples.size()},
                                             {"sigma_emb", cfg.embed.sigma_emb},
                                             {"store", store_dir}});
  std::cout << "wrote embedding store " << store_dir << " (" << samples.size() << " videos, dim " << dim
            << ")\n";
  return 0;
}

int pretrain(const RunConfig& cfg) {
  require(cfg.output_dir, "output_dir");
  const std::string manifest = require(cfg.paths.manifest, "paths.manifest");
  const std::vector<PointCloudVideo<float>> train = load_split(manifest, "train");

  RunConfig resolved = cfg;
  if (resolved.paths.checkpoint.empty())
    resolved.paths.checkpoint = (fs::path(cfg.output_dir) / "checkpoint.ckpt").string();
  write_resolved_config(cfg.output_dir, resolved);

  ImPstNet<float> net(cfg.model, cfg.seed);
  const TrainOptions opts = train_options(cfg, cfg.pretrain, resolved.paths.checkpoint);
  const std::vector<EpochMetrics> history = vg4d::pretrain(net, train, opts);

  const EpochMetrics& last = history.back();
  write_summary(cfg.output_dir, ordered_json{{"command", "pretrain"},
                                             {"epochs", opts.schedule.epochs},
                                             {"train_samples", train.size()},
                                             {"final_train_acc", last.train_acc},
                                             {"final_loss", last.loss_total},
                                             {"checkpoint", resolved.paths.checkpoint},
                                             {"metrics", opts.metrics_path}});
  std::cout << "pretrained " << opts.schedule.epochs << " epochs on " << train.size()
            << " samples: train_acc " << last.train_acc << ", checkpoint " << resolved.paths.checkpoint
            << "\n";
  return 0;
}

int finetune(const RunConfig& cfg) {
  require(cfg.output_dir, "output_dir");
  const std::string manifest = require(cfg.paths.manifest, "paths.manifest");
  const std::string store_dir = require(cfg.paths.store, "paths.store");
  const std::string init = require(cfg.paths.init_checkpoint, "paths.init_checkpoint");

  ImPstNet<float> net = ImPstNet<float>::load(init);
  const EmbeddingStore store = EmbeddingStore::load(store_dir);
  const std::vector<PointCloudVideo<float>> train = load_split(manifest, "train");

  RunConfig resolved = cfg;
  resolved.model = net.config();  // architecture comes from the checkpoint
  if (resolved.paths.checkpoint.empty())
    resolved.paths.checkpoint = (fs::path(cfg.output_dir) / "checkpoint.ckpt").string();
  write_resolved_config(cfg.output_dir, resolved);

  const TrainOptions opts = train_options(cfg, cfg.finetune, resolved.paths.checkpoint);
  const std::vector<EpochMetrics> history = cross_modal_finetune(net, train, store, opts);

  const EpochMetrics& last = history.back();
  write_summary(cfg.output_dir, ordered_json{{"command", "finetune"},
                                             {"epochs", opts.schedule.epochs},
                                             {"train_samples", train.size()},
                                             {"final_train_acc", last.train_acc},
                                             {"final_loss", last.loss_total},
                                             {"final_loss_pc_video", last.loss_pc_video},
                                             {"final_loss_pc_text", last.loss_pc_text},
                                             {"checkpoint", resolved.paths.checkpoint},
                                             {"metrics", opts.metrics_path}});
  std::cout << "finetuned " << opts.schedule.epochs << " epochs on " << train.size()
            << " samples: train_acc " << last.train_acc << ", checkpoint " << resolved.paths.checkpoint
            << "\n";
  return 0;
}

int evaluate(const RunConfig& cfg) {
  require(cfg.output_dir, "output_dir");
  const std::string manifest = require(cfg.paths.manifest, "paths.manifest");
  const std::string ckpt = require(cfg.paths.checkpoint, "paths.checkpoint");

  ImPstNet<float> net = ImPstNet<float>::load(ckpt);
  EmbeddingStore store;
  const bool with_store = !cfg.paths.store.empty();
  if (with_store) store = EmbeddingStore::load(cfg.paths.store);
  const std::vector<PointCloudVideo<float>> test = load_split(manifest, "test");

  RunConfig resolved = cfg;
  resolved.model = net.config();
  write_resolved_config(cfg.output_dir, resolved);

  const EvalReport rep = vg4d::evaluate(net, net.params(), test, with_store ? &store : nullptr, cfg.fusion,
                                        cfg.channels, cfg.pipeline, cfg.seed);
  write_eval_report((fs::path(cfg.output_dir) / "eval.json").string(), rep);
  std::cout << "accuracy " << rep.accuracy << " over " << test.size() << " test samples\n";
  return 0;
}

int ablate(const RunConfig& cfg, const std::vector<std::string>& toggles) {
  require(cfg.output_dir, "output_dir");
  const std::string manifest = require(cfg.paths.manifest, "paths.manifest");
  const std::vector<PointCloudVideo<float>> train = load_split(manifest, "train");
  const std::vector<PointCloudVideo<float>> test = load_split(manifest, "test");

  write_resolved_config(cfg.output_dir, cfg);
  TrainOptions base = train_options(cfg, cfg.pretrain, "");
  base.metrics_path.clear();

  const std::vector<std::string>& order = toggles.empty() ? ablation_toggle_order() : toggles;
  const std::vector<AblationRow> rows = ablation_run<float>(cfg.model, base, train, test, order, cfg.seed);
  const std::string csv = (fs::path(cfg.output_dir) / "ablation.csv").string();
  write_ablation_csv(csv, rows);
  for (const auto& r : rows) std::cout << r.name << ": " << r.test_accuracy << "\n";
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int gradcheck(const RunConfig& cfg, int num_seeds) {
  if (num_seeds < 1) throw ConfigError("gradcheck: --seeds must be >= 1");
  std::vector<selfcheck::CheckResult> results = selfcheck::gradcheck_ops(num_seeds, cfg.seed);
  results.push_back(selfcheck::gradcheck_end_to_end(num_seeds, cfg.seed));
  return report_checks(cfg, "gradcheck", results);
}

int oracle_check(const RunConfig& cfg, int instances) {
  if (instances < 1) throw ConfigError("oracle-check: --instances must be >= 1");
  std::vector<selfcheck::CheckResult> results = selfcheck::oracle_suite_geometry(instances, cfg.seed);
  // the nested-loop convolution reference is heavier per instance
  const int conv_instances = std::max(1, instances / 4);
  for (auto& r : selfcheck::oracle_suite_conv(conv_instances, cfg.seed)) results.push_back(std::move(r));
  for (auto& r : selfcheck::loss_identity_suite(cfg.seed)) results.push_back(std::move(r));
  {
    SynthSpec spec;
    spec.num_classes = kMotionBankSize;
    spec.samples_per_class = 25;
    spec.frames_per_video = 8;
    spec.points_per_frame = 32;
    spec.noise_sigma = 0.0;
    spec.rng_seed = cfg.seed;
    const double acc = selfcheck::synthetic_separability(generate_synthetic<float>(spec));
    selfcheck::CheckResult r;
    r.name = "oracle.synthetic_separability";
    r.err = 1.0 - acc;
    r.tol = 0.05;
    r.pass = acc >= 0.95;
    r.detail = "accuracy " + std::to_string(acc);
    results.push_back(std::move(r));
  }
  return report_checks(cfg, "oracle-check", results);
}

}  // namespace vg4d::cmd
