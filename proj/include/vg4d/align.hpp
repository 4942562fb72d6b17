// SPDX-License-Identifier: Apache-2.0
//
// Frozen-embedding store, the cross-modal loss stack, learning-rate
// schedules, and the two-stage training loop shared by pretraining and
// cross-modal finetuning.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vg4d/data.hpp"
#include "vg4d/model.hpp"
#include "vg4d/params.hpp"
#include "vg4d/tensor.hpp"

namespace vg4d {

// ---------------------------------------------------------------------------
// Embedding banks (frozen text/video vectors)
// ---------------------------------------------------------------------------

struct EmbeddingBank {
  std::vector<std::string> ids;  // row i belongs to ids[i]
  MatRow<float> rows;
};

/// Matrix file: magic "VG4DEMB1", u32 rows, u32 dim, row-major little-endian
/// f32. Index file: JSON lines, one {id, row} object per row.
void save_embedding_bank(const std::string& index_path, const std::string& matrix_path,
                         const EmbeddingBank& bank);
EmbeddingBank load_embedding_bank(const std::string& index_path, const std::string& matrix_path);

/// Two frozen banks: one text vector per class, one video vector per sample.
/// Stored as a directory of four files: text_index.jsonl, text_matrix.bin,
/// video_index.jsonl, video_matrix.bin.
struct EmbeddingStore {
  EmbeddingBank text;   // ids are class names, row order = class index
  EmbeddingBank video;  // ids are sample ids
  std::unordered_map<std::string, Eigen::Index> video_lookup;

  int dim() const { return static_cast<int>(text.rows.cols()); }
  int num_classes() const { return static_cast<int>(text.rows.rows()); }

  Eigen::Index video_row(const std::string& sample_id) const {
    auto it = video_lookup.find(sample_id);
    if (it == video_lookup.end()) throw DataError("no video embedding for sample '" + sample_id + "'");
    return it->second;
  }

  void save(const std::string& dir) const;
  static EmbeddingStore load(const std::string& dir);
};

/// Synthetic stand-in for the frozen encoders: class text vectors are random
/// unit vectors (orthonormalized when dim >= num_classes); each sample's
/// video vector is its class vector plus Gaussian noise, re-normalized.
/// sigma_emb = 0 copies the class vector bit-exactly.
EmbeddingStore synth_embeddings(int num_classes, int dim,
                                const std::vector<std::pair<std::string, int>>& samples,
                                double sigma_emb, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Loss stack
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha = 1.0;  // pc-video term
  double beta = 1.0;   // pc-text term
  double theta = 1.0;  // pc cross-entropy term
  double gamma = 1.0;  // rgb cross-entropy term

  void validate() const {
    if (alpha < 0 || beta < 0 || theta < 0 || gamma < 0)
      throw ArgumentError("loss weights must be non-negative");
    if (alpha == 0 && beta == 0 && theta == 0 && gamma == 0)
      throw ArgumentError("at least one loss weight must be positive");
  }
};

/// Mean over rows i of -log softmax_{classes j}(t_j . p_i) at j = y_i.
/// Text rows are frozen constants; gradients flow into pc_embeds only.
template <typename Scalar>
TensorNode<Scalar> loss_pc_text(Tape<Scalar>& tape, const TensorNode<Scalar>& pc_embeds,
                                const std::vector<int>& labels, const MatRow<Scalar>& text_embeds,
                                double logit_scale = 1.0) {
  if (pc_embeds.rank() != 2 || pc_embeds.dim(1) != text_embeds.cols())
    throw DimensionError("loss_pc_text: embedding dim mismatch");
  const MatRow<Scalar> tt = text_embeds.transpose();
  TensorNode<Scalar> sim =
      matmul(pc_embeds, tape.constant({text_embeds.cols(), text_embeds.rows()}, tt.data()));
  if (logit_scale != 1.0) sim = scale(sim, logit_scale);
  return cross_entropy(sim, labels);
}

/// Mean over rows i of -log softmax_{batch j}(v_j . p_i) at j = i. The
/// positive pair is the row-aligned video vector; the denominator runs over
/// the batch.
template <typename Scalar>
TensorNode<Scalar> loss_pc_video(Tape<Scalar>& tape, const TensorNode<Scalar>& pc_embeds,
                                 const MatRow<Scalar>& video_embeds, double logit_scale = 1.0) {
  if (pc_embeds.rank() != 2 || pc_embeds.dim(0) != video_embeds.rows() ||
      pc_embeds.dim(1) != video_embeds.cols())
    throw DimensionError("loss_pc_video: batch shape mismatch");
  const MatRow<Scalar> vt = video_embeds.transpose();
  TensorNode<Scalar> sim =
      matmul(pc_embeds, tape.constant({video_embeds.cols(), video_embeds.rows()}, vt.data()));
  if (logit_scale != 1.0) sim = scale(sim, logit_scale);
  std::vector<int> diag(static_cast<std::size_t>(video_embeds.rows()));
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);
  return cross_entropy(sim, diag);
}

template <typename Scalar>
TensorNode<Scalar> loss_cl(const LossWeights& w, const TensorNode<Scalar>& l_pv,
                           const TensorNode<Scalar>& l_pt) {
  w.validate();
  return add(scale(l_pv, w.alpha), scale(l_pt, w.beta));
}

template <typename Scalar>
TensorNode<Scalar> loss_final(const LossWeights& w, const TensorNode<Scalar>& l_cl,
                              const TensorNode<Scalar>& l_pc_ce, const TensorNode<Scalar>& l_rgb_ce) {
  w.validate();
  return add(add(l_cl, scale(l_pc_ce, w.theta)), scale(l_rgb_ce, w.gamma));
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

enum class LrDecay { kCosine, kStep };

struct TrainSchedule {
  int epochs = 30;
  double lr_init = 0.001;
  double lr_final = 0.0001;
  double weight_decay = 0.1;
  int batch_size = 32;
  double momentum = 0.9;
  LrDecay decay = LrDecay::kCosine;
  int step_size = 0;  // step decay interval; 0 means epochs/3

  void validate() const {
    if (epochs < 1) throw ConfigError("schedule: epochs must be >= 1");
    if (!(lr_init >= lr_final) || lr_final < 0) throw ConfigError("schedule: need lr_init >= lr_final >= 0");
    if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
    if (weight_decay < 0 || momentum < 0) throw ConfigError("schedule: negative hyperparameter");
  }
};

inline double lr_at(const TrainSchedule& s, int epoch) {
  if (epoch < 0 || epoch > s.epochs)
    throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                        std::to_string(s.epochs) + "]");
  if (s.decay == LrDecay::kCosine) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(s.epochs);
    return s.lr_final + 0.5 * (s.lr_init - s.lr_final) * (1.0 + std::cos(M_PI * frac));
  }
  const int step = s.step_size > 0 ? s.step_size : std::max(1, s.epochs / 3);
  return s.lr_init * std::pow(0.1, epoch / step);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

enum class TrainMode { kClassifierOnly, kCrossModal };

/// Frame selection applied to every sample: stride the whole video, then
/// segment-sample clip_len frames from the strided list (random within each
/// segment when sampling randomly, middle frame otherwise).
struct PipelineConfig {
  int clip_len = 0;       // 0 selects every strided frame
  int frame_stride = 1;
  int points_per_frame = 0;  // 0 keeps frames as stored
};

template <typename Scalar>
Video<Scalar> assemble_clip(const PointCloudVideo<Scalar>& pcv, const PipelineConfig& pc,
                            SampleMode mode, Rng& rng) {
  const int total = static_cast<int>(pcv.frames.size());
  const int strided_len = 1 + (total - 1) / pc.frame_stride;
  const std::vector<int> strided = strided_clip(total, strided_len, pc.frame_stride, 0);
  const int t_target = pc.clip_len == 0 ? strided_len : pc.clip_len;
  if (strided_len < t_target)
    throw DataError("sample '" + pcv.sample_id + "' has " + std::to_string(strided_len) +
                    " strided frames, need " + std::to_string(t_target));
  const std::vector<int> seg = segment_sample(strided_len, t_target, mode, rng);
  Video<Scalar> out;
  out.reserve(seg.size());
  for (int si : seg) {
    const FrameCloud<Scalar>& src = pcv.frames[static_cast<std::size_t>(strided[static_cast<std::size_t>(si)])];
    if (pc.points_per_frame > 0) {
      out.push_back(budget_points(src, pc.points_per_frame, rng));
    } else {
      out.push_back(src);
    }
  }
  return out;
}

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0;
  double loss_pc_video = 0;
  double loss_pc_text = 0;
  double loss_pc_ce = 0;
  double loss_rgb_ce = 0;
  double train_acc = 0;
};

inline constexpr char kMetricsHeader[] =
    "epoch,lr,loss_total,loss_pc_video,loss_pc_text,loss_pc_ce,loss_rgb_ce,train_acc";

void append_metrics_row(std::ostream& os, const EpochMetrics& m);

struct TrainOptions {
  TrainSchedule schedule;
  LossWeights weights;  // only read in cross-modal mode
  PipelineConfig pipeline;
  std::uint64_t seed = 0;
  bool random_frame_sampling = true;  // false pins every pick to the segment middle
  double logit_scale = 1.0;
  std::string metrics_path;      // empty disables the CSV log
  std::string checkpoint_path;   // empty disables checkpoints
  int checkpoint_interval = 0;   // epochs between periodic saves; 0 = final only
};

/// Shared engine for both stages. Classifier-only mode minimizes the 4D-head
/// cross-entropy; cross-modal mode minimizes the full weighted objective with
/// the store's text/video vectors as constants. One optimizer step per batch;
/// every parameter receives a defined gradient every step.
template <typename Scalar>
std::vector<EpochMetrics> train_loop(ImPstNet<Scalar>& net,
                                     const std::vector<PointCloudVideo<Scalar>>& samples,
                                     const EmbeddingStore* store, TrainMode mode,
                                     const TrainOptions& opts) {
  opts.schedule.validate();
  if (samples.empty()) throw ArgumentError("train_loop: empty dataset");
  const int num_classes = net.config().num_classes;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes)
      throw DataError("sample '" + s.sample_id + "' has label outside [0," + std::to_string(num_classes) +
                      ")");
  }

  MatRow<Scalar> text;
  std::vector<Eigen::Index> video_rows(samples.size());
  if (mode == TrainMode::kCrossModal) {
    if (store == nullptr) throw ArgumentError("train_loop: cross-modal mode needs an embedding store");
    opts.weights.validate();
    if (store->dim() != net.config().embed_dim)
      throw ConfigError("embedding store dim " + std::to_string(store->dim()) +
                        " != model embed_dim " + std::to_string(net.config().embed_dim));
    if (store->num_classes() != num_classes)
      throw ConfigError("embedding store has " + std::to_string(store->num_classes()) +
                        " classes, model expects " + std::to_string(num_classes));
    text = store->text.rows.cast<Scalar>();
    for (std::size_t i = 0; i < samples.size(); ++i)
      video_rows[i] = store->video_row(samples[i].sample_id);  // throws naming any missing id
  }

  std::ofstream metrics;
  if (!opts.metrics_path.empty()) {
    metrics.open(opts.metrics_path, std::ios::binary);
    if (!metrics) throw DataError("cannot open " + opts.metrics_path + " for writing");
    metrics << kMetricsHeader << "\n";
  }

  Rng rng(Rng::mix(opts.seed, 0x747261696eULL));
  std::vector<int> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<EpochMetrics> history;
  for (int epoch = 0; epoch < opts.schedule.epochs; ++epoch) {
    SgdConfig sgd;
    sgd.lr = lr_at(opts.schedule, epoch);
    sgd.momentum = opts.schedule.momentum;
    sgd.weight_decay = opts.schedule.weight_decay;

    rng.shuffle(order);
    EpochMetrics em;
    em.epoch = epoch;
    em.lr = sgd.lr;
    int correct = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.schedule.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opts.schedule.batch_size));
      const int nb = static_cast<int>(stop - start);

      Tape<Scalar> tape;
      Lease<Scalar> lease(net.params(), tape);
      std::vector<TensorNode<Scalar>> logit_rows, embed_rows;
      std::vector<int> labels;
      MatRow<Scalar> video(nb, net.config().embed_dim);
      for (std::size_t b = start; b < stop; ++b) {
        const PointCloudVideo<Scalar>& s = samples[static_cast<std::size_t>(order[b])];
        const SampleMode smode = opts.random_frame_sampling ? SampleMode::kTrain : SampleMode::kTest;
        const Video<Scalar> clip = assemble_clip(s, opts.pipeline, smode, rng);
        auto fwd = net.forward(tape, lease, clip);
        logit_rows.push_back(fwd.logits);
        embed_rows.push_back(fwd.raw_embedding);
        labels.push_back(s.label);
        if (mode == TrainMode::kCrossModal)
          video.row(static_cast<Eigen::Index>(b - start)) =
              store->video.rows.row(video_rows[static_cast<std::size_t>(order[b])]).cast<Scalar>();
      }

      TensorNode<Scalar> logits = logit_rows.size() == 1 ? logit_rows[0] : concat(logit_rows, 0);
      TensorNode<Scalar> l_pc = cross_entropy(logits, labels);
      TensorNode<Scalar> total = l_pc;
      double v_pv = 0, v_pt = 0, v_rgb = 0;
      if (mode == TrainMode::kCrossModal) {
        TensorNode<Scalar> raw = embed_rows.size() == 1 ? embed_rows[0] : concat(embed_rows, 0);
        TensorNode<Scalar> pc_embeds = l2_normalize(raw);
        TensorNode<Scalar> l_pv = loss_pc_video(tape, pc_embeds, video, opts.logit_scale);
        TensorNode<Scalar> l_pt = loss_pc_text(tape, pc_embeds, labels, text, opts.logit_scale);
        TensorNode<Scalar> video_node = tape.constant_matrix(video);
        TensorNode<Scalar> l_rgb = cross_entropy(net.rgb_logits(lease, video_node), labels);
        total = loss_final(opts.weights, loss_cl(opts.weights, l_pv, l_pt), l_pc, l_rgb);
        v_pv = static_cast<double>(l_pv.scalar());
        v_pt = static_cast<double>(l_pt.scalar());
        v_rgb = static_cast<double>(l_rgb.scalar());
      }

      const double batch_loss = static_cast<double>(total.scalar());
      if (!std::isfinite(batch_loss))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));

      tape.backward(total);
      sgd_step(net.params(), lease.pull_grads(), sgd);

      // batch-size weighted accumulation
      em.loss_total += batch_loss * nb;
      em.loss_pc_video += v_pv * nb;
      em.loss_pc_text += v_pt * nb;
      em.loss_pc_ce += static_cast<double>(l_pc.scalar()) * nb;
      em.loss_rgb_ce += v_rgb * nb;
      const auto lv = logits.values();
      for (int b = 0; b < nb; ++b) {
        int arg = 0;
        for (int c = 1; c < num_classes; ++c)
          if (lv(b * num_classes + c) > lv(b * num_classes + arg)) arg = c;
        if (arg == labels[static_cast<std::size_t>(b)]) ++correct;
      }
    }

    const double n = static_cast<double>(samples.size());
    em.loss_total /= n;
    em.loss_pc_video /= n;
    em.loss_pc_text /= n;
    em.loss_pc_ce /= n;
    em.loss_rgb_ce /= n;
    em.train_acc = static_cast<double>(correct) / n;
    history.push_back(em);

    if (metrics.is_open()) {
      append_metrics_row(metrics, em);
      metrics.flush();
    }
    if (!opts.checkpoint_path.empty() && opts.checkpoint_interval > 0 &&
        (epoch + 1) % opts.checkpoint_interval == 0 && epoch + 1 < opts.schedule.epochs) {
      net.save(opts.checkpoint_path + ".e" + std::to_string(epoch + 1));
    }
  }

  if (!opts.checkpoint_path.empty()) net.save(opts.checkpoint_path);
  return history;
}

template <typename Scalar>
std::vector<EpochMetrics> pretrain(ImPstNet<Scalar>& net, const std::vector<PointCloudVideo<Scalar>>& samples,
                                   const TrainOptions& opts) {
  return train_loop(net, samples, nullptr, TrainMode::kClassifierOnly, opts);
}

template <typename Scalar>
std::vector<EpochMetrics> cross_modal_finetune(ImPstNet<Scalar>& net,
                                               const std::vector<PointCloudVideo<Scalar>>& samples,
                                               const EmbeddingStore& store, const TrainOptions& opts) {
  return train_loop(net, samples, &store, TrainMode::kCrossModal, opts);
}

}  // namespace vg4d
