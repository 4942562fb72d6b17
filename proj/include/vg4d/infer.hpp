// SPDX-License-Identifier: Apache-2.0
//
// Test-time scoring, the four-channel score ensemble, evaluation metrics,
// and the additive ablation harness.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vg4d/align.hpp"
#include "vg4d/model.hpp"

namespace vg4d {

/// Per-class probability vectors of the four channels. Channels derived from
/// the frozen video embedding are absent when the store has no row for the
/// sample (has_video false); text channels require a store at all.
struct ScoreBundle {
  Eigen::VectorXd pc;
  Eigen::VectorXd pc_text;
  Eigen::VectorXd rgb;
  Eigen::VectorXd rgb_text;
  bool has_text = false;
  bool has_video = false;
};

struct FusionWeights {
  double w_pc = 1.0;
  double w_pc_text = 1.0;
  double w_rgb = 1.0;
  double w_rgb_text = 1.0;

  void validate() const {
    if (w_pc < 0 || w_pc_text < 0 || w_rgb < 0 || w_rgb_text < 0)
      throw ArgumentError("fusion weights must be non-negative");
    if (w_pc + w_pc_text + w_rgb + w_rgb_text == 0)
      throw ArgumentError("fusion weights must not all be zero");
  }
};

struct ChannelMask {
  bool pc = true;
  bool pc_text = true;
  bool rgb = true;
  bool rgb_text = true;
};

inline Eigen::VectorXd stable_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

/// All four per-class distributions from one encoder forward pass plus store
/// lookups. A missing video row throws unless allow_missing_video is set, in
/// which case the rgb channels are flagged absent.
template <typename Scalar>
ScoreBundle score_sample(const ImPstNet<Scalar>& net, ParameterSet<Scalar>& params,
                         const Video<Scalar>& clip, const EmbeddingStore* store,
                         const std::string& sample_id, bool allow_missing_video = false) {
  Tape<Scalar> tape;
  Lease<Scalar> lease(params, tape);
  auto fwd = net.forward(tape, lease, clip);

  ScoreBundle out;
  const int k = net.config().num_classes;
  Eigen::VectorXd logits(k);
  for (int c = 0; c < k; ++c) logits(c) = static_cast<double>(fwd.logits.values()(c));
  out.pc = stable_softmax(logits);

  if (store == nullptr) return out;
  if (store->num_classes() != k)
    throw ConfigError("score_sample: store has " + std::to_string(store->num_classes()) +
                      " classes, model expects " + std::to_string(k));
  if (store->dim() != net.config().embed_dim)
    throw ConfigError("score_sample: store dim != model embed_dim");

  const MatRow<double> text = store->text.rows.cast<double>();
  Eigen::VectorXd pc_embed(store->dim());
  for (int j = 0; j < store->dim(); ++j) pc_embed(j) = static_cast<double>(fwd.embedding.values()(j));
  out.pc_text = stable_softmax(text * pc_embed);
  out.has_text = true;

  auto it = store->video_lookup.find(sample_id);
  if (it == store->video_lookup.end()) {
    if (!allow_missing_video) throw DataError("no video embedding for sample '" + sample_id + "'");
    return out;
  }
  const Eigen::VectorXd video = store->video.rows.row(it->second).cast<double>().transpose();
  out.rgb_text = stable_softmax(text * video);

  Tape<Scalar> rtape;
  Lease<Scalar> rlease(params, rtape);
  MatRow<Scalar> vrow = store->video.rows.row(it->second).template cast<Scalar>();
  TensorNode<Scalar> rlog = net.rgb_logits(rlease, rtape.constant_matrix(vrow));
  Eigen::VectorXd rl(k);
  for (int c = 0; c < k; ++c) rl(c) = static_cast<double>(rlog.values()(c));
  out.rgb = stable_softmax(rl);
  out.has_video = true;
  return out;
}

/// Convex combination of the available channels. Weights are normalized
/// before mixing, so a one-hot weight vector returns that channel's vector
/// bit-exactly. Argmax ties resolve to the lowest class index.
inline std::pair<Eigen::VectorXd, int> fuse(const ScoreBundle& bundle, const FusionWeights& weights,
                                            const ChannelMask& mask = {}) {
  weights.validate();
  struct Channel {
    const Eigen::VectorXd* v;
    double w;
    bool present;
  };
  const Channel channels[4] = {
      {&bundle.pc, mask.pc ? weights.w_pc : 0.0, bundle.pc.size() > 0},
      {&bundle.pc_text, mask.pc_text ? weights.w_pc_text : 0.0, bundle.has_text},
      {&bundle.rgb, mask.rgb ? weights.w_rgb : 0.0, bundle.has_video},
      {&bundle.rgb_text, mask.rgb_text ? weights.w_rgb_text : 0.0, bundle.has_video},
  };
  double total = 0;
  for (const Channel& c : channels)
    if (c.present) total += c.w;
  if (total == 0) throw ArgumentError("fuse: no channel has positive weight");
  const Eigen::Index k = bundle.pc.size();
  if (k == 0) throw ArgumentError("fuse: empty score bundle");
  Eigen::VectorXd fused = Eigen::VectorXd::Zero(k);
  for (const Channel& c : channels) {
    if (!c.present || c.w == 0) continue;
    fused += (c.w / total) * (*c.v);
  }
  int arg = 0;
  for (Eigen::Index i = 1; i < k; ++i)
    if (fused(i) > fused(arg)) arg = static_cast<int>(i);
  return {fused, arg};
}

struct EvalReport {
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<int>> confusion;  // [true label][predicted]
  ChannelMask mask;
  FusionWeights weights;
};

/// JSON report {accuracy, per_class_accuracy, confusion_matrix, channel_mask,
/// fusion_weights}; deterministic bytes for a given report (report_io.cpp).
std::string report_to_json(const EvalReport& report);
void write_eval_report(const std::string& path, const EvalReport& report);

/// Top-1 accuracy and confusion matrix of the fused prediction over a split.
/// Deterministic: per-sample rng streams keyed off `seed`, test-mode frame
/// sampling.
template <typename Scalar>
EvalReport evaluate(const ImPstNet<Scalar>& net, ParameterSet<Scalar>& params,
                    const std::vector<PointCloudVideo<Scalar>>& split, const EmbeddingStore* store,
                    const FusionWeights& weights, const ChannelMask& mask_in, const PipelineConfig& pipeline,
                    std::uint64_t seed, bool allow_missing_video = false) {
  if (split.empty()) throw ArgumentError("evaluate: empty split");
  const int k = net.config().num_classes;
  ChannelMask mask = mask_in;
  if (store == nullptr) {
    mask.pc = true;
    mask.pc_text = mask.rgb = mask.rgb_text = false;
  }
  EvalReport rep;
  rep.mask = mask;
  rep.weights = weights;
  rep.confusion.assign(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(k), 0));
  int correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& s = split[i];
    if (s.label < 0 || s.label >= k) throw DataError("sample '" + s.sample_id + "' has invalid label");
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i)));
    const Video<Scalar> clip = assemble_clip(s, pipeline, SampleMode::kTest, rng);
    const ScoreBundle bundle = score_sample(net, params, clip, store, s.sample_id, allow_missing_video);
    const auto [fused, pred] = fuse(bundle, weights, mask);
    rep.confusion[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(pred)] += 1;
    if (pred == s.label) ++correct;
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  rep.per_class_accuracy.assign(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    int row_total = 0;
    for (int p = 0; p < k; ++p) row_total += rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
    if (row_total > 0)
      rep.per_class_accuracy[static_cast<std::size_t>(c)] =
          static_cast<double>(rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]) / row_total;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Additive ablation harness
// ---------------------------------------------------------------------------

/// Canonical additive order of the four training/model refinements.
inline const std::vector<std::string>& ablation_toggle_order() {
  static const std::vector<std::string> order = {"random_frame_sampling", "cosine_decay",
                                                 "normalize_offsets", "include_center_feature"};
  return order;
}

struct AblationRow {
  std::string name;
  bool random_frame_sampling = false;
  bool cosine_decay = false;
  bool normalize_offsets = false;
  bool include_center_feature = false;
  std::uint64_t config_hash = 0;
  double test_accuracy = 0;
};

inline constexpr char kAblationHeader[] =
    "row,random_frame_sampling,cosine_decay,normalize_offsets,include_center_feature,config_hash,"
    "test_accuracy";

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

/// Baseline (all refinements off) plus one row per additive toggle. Every
/// row trains a fresh model from the same seed and reports PC-only top-1 on
/// the test split.
template <typename Scalar>
std::vector<AblationRow> ablation_run(const ImPstNetConfig& base_model, const TrainOptions& base_opts,
                                      const std::vector<PointCloudVideo<Scalar>>& train_split,
                                      const std::vector<PointCloudVideo<Scalar>>& test_split,
                                      const std::vector<std::string>& toggles, std::uint64_t model_seed) {
  for (const auto& t : toggles) {
    bool known = false;
    for (const auto& o : ablation_toggle_order()) known = known || o == t;
    if (!known) throw ConfigError("ablation: unknown toggle '" + t + "'");
  }

  std::vector<AblationRow> rows;
  AblationRow state;
  state.name = "baseline";
  for (std::size_t step = 0; step <= toggles.size(); ++step) {
    if (step > 0) {
      const std::string& t = toggles[step - 1];
      state.name = "+" + t;
      if (t == "random_frame_sampling") state.random_frame_sampling = true;
      if (t == "cosine_decay") state.cosine_decay = true;
      if (t == "normalize_offsets") state.normalize_offsets = true;
      if (t == "include_center_feature") state.include_center_feature = true;
    }

    ImPstNetConfig mc = base_model;
    mc.normalize_offsets = state.normalize_offsets;
    mc.include_center_feature = state.include_center_feature;
    TrainOptions opts = base_opts;
    opts.random_frame_sampling = state.random_frame_sampling;
    opts.schedule.decay = state.cosine_decay ? LrDecay::kCosine : LrDecay::kStep;
    opts.metrics_path.clear();
    opts.checkpoint_path.clear();

    const std::string fingerprint = config_to_json(mc) + "|rfs=" + std::to_string(state.random_frame_sampling) +
                                    "|cos=" + std::to_string(state.cosine_decay) +
                                    "|epochs=" + std::to_string(opts.schedule.epochs);
    state.config_hash = fnv1a64(fingerprint);

    ImPstNet<Scalar> net(mc, model_seed);
    pretrain(net, train_split, opts);
    FusionWeights pc_only;
    pc_only.w_pc_text = pc_only.w_rgb = pc_only.w_rgb_text = 0;
    EvalReport rep = evaluate(net, net.params(), test_split, nullptr, pc_only, ChannelMask{},
                              opts.pipeline, opts.seed);
    state.test_accuracy = rep.accuracy;
    rows.push_back(state);
  }
  return rows;
}

}  // namespace vg4d
