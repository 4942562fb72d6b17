// SPDX-License-Identifier: Apache-2.0
//
// The 4D point-cloud-video encoder: a per-frame spatial extractor followed by
// cross-frame point-tube convolution stages, a classification head, and a
// projection head onto the shared embedding space. Every architectural
// refinement is independently toggleable.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "vg4d/geom.hpp"
#include "vg4d/params.hpp"
#include "vg4d/tensor.hpp"

namespace vg4d {

struct ImPstNetConfig {
  std::vector<int> spatial_subsample_rate = {4, 2};    // S_s per stage
  std::vector<std::vector<int>> mlp_widths = {{32}, {64}};
  std::vector<double> radius = {0.35, 0.7};            // search radius per stage
  int k_nbr = 9;
  int temporal_radius = 1;  // stage 0 is purely spatial regardless
  int num_classes = 8;
  int embed_dim = 16;
  bool normalize_offsets = true;
  bool include_center_feature = true;
  // Global aggregation: 0 pools one max over every centroid of every frame
  // (order-free); > 0 max-pools per frame and concatenates that many frames
  // in order, so the heads can read temporal direction.
  int pool_frames = 0;

  int num_stages() const { return static_cast<int>(mlp_widths.size()); }

  void validate() const {
    const std::size_t n = mlp_widths.size();
    if (n == 0) throw ConfigError("model: at least one stage required");
    if (spatial_subsample_rate.size() != n || radius.size() != n)
      throw ConfigError("model: per-stage lists must have equal length");
    for (int s : spatial_subsample_rate)
      if (s < 1) throw ConfigError("model: spatial_subsample_rate must be >= 1");
    for (const auto& widths : mlp_widths) {
      if (widths.empty()) throw ConfigError("model: mlp_widths per stage must be non-empty");
      for (int w : widths)
        if (w < 1) throw ConfigError("model: mlp width must be >= 1");
    }
    for (double r : radius)
      if (!(r > 0)) throw ConfigError("model: radius must be positive");
    if (k_nbr < 1) throw ConfigError("model: K_nbr must be >= 1");
    if (temporal_radius < 0) throw ConfigError("model: temporal_radius must be >= 0");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1");
    if (pool_frames < 0) throw ConfigError("model: pool_frames must be >= 0");
  }
};

// JSON sidecar serialization (model_io.cpp).
std::string config_to_json(const ImPstNetConfig& cfg);
ImPstNetConfig config_from_json(const std::string& text);
void save_config(const std::string& path, const ImPstNetConfig& cfg);
ImPstNetConfig load_config(const std::string& path);

template <typename Scalar>
struct StageOutput {
  Video<Scalar> frames;                    // centroid coordinates per frame
  std::vector<TensorNode<Scalar>> feats;   // per frame, N'-by-width
};

template <typename Scalar>
class ImPstNet {
 public:
  ImPstNet(ImPstNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int in_w = 3;  // stage 0 sees offsets only
    for (int s = 0; s < cfg_.num_stages(); ++s) {
      int w_in = in_w;
      for (std::size_t l = 0; l < cfg_.mlp_widths[static_cast<std::size_t>(s)].size(); ++l) {
        const int w_out = cfg_.mlp_widths[static_cast<std::size_t>(s)][l];
        const std::string base = "stage" + std::to_string(s) + ".mlp" + std::to_string(l);
        add_linear(base, w_in, w_out, seed, /*wd_exempt=*/false);
        w_in = w_out;
      }
      // next stage input: neighbor feature (+ center feature) + offset
      in_w = w_in + (cfg_.include_center_feature ? w_in : 0) + 3;
      stage_out_width_.push_back(w_in);
    }
    const int trunk = stage_out_width_.back() * std::max(1, cfg_.pool_frames);
    add_linear("cls_head", trunk, cfg_.num_classes, seed, /*wd_exempt=*/false);
    add_linear("proj", trunk, cfg_.embed_dim, seed, /*wd_exempt=*/false);
    // trained on frozen video embeddings only; excluded from weight decay
    add_linear("rgb_head", cfg_.embed_dim, cfg_.num_classes, seed, /*wd_exempt=*/true,
               /*wd_exempt_weight=*/true);
  }

  const ImPstNetConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }
  int stage_out_width(int s) const { return stage_out_width_[static_cast<std::size_t>(s)]; }

  /// Stage 0: per-frame sampling, grouping, shared MLP, and neighbor
  /// max-pooling. Purely spatial (no temporal window).
  StageOutput<Scalar> spatial_extract(Tape<Scalar>& tape, const Lease<Scalar>& lease,
                                      const Video<Scalar>& frames) const {
    return run_stage(tape, lease, 0, frames, {});
  }

  /// Stages >= 1: cross-frame point tubes over the previous stage's
  /// centroids and features.
  StageOutput<Scalar> im_pstconv(Tape<Scalar>& tape, const Lease<Scalar>& lease, int stage,
                                 const StageOutput<Scalar>& in) const {
    if (stage < 1 || stage >= cfg_.num_stages())
      throw ArgumentError("im_pstconv: stage index out of range");
    return run_stage(tape, lease, stage, in.frames, in.feats);
  }

  struct ForwardOut {
    TensorNode<Scalar> logits;         // 1-by-K_classes
    TensorNode<Scalar> raw_embedding;  // 1-by-embed_dim, pre-normalization
    TensorNode<Scalar> embedding;      // unit row
  };

  ForwardOut forward(Tape<Scalar>& tape, const Lease<Scalar>& lease, const Video<Scalar>& frames) const {
    TensorNode<Scalar> pooled = trunk_features(tape, lease, frames);
    ForwardOut out;
    out.logits = linear(pooled, lease.node("cls_head.weight"), lease.node("cls_head.bias"));
    out.raw_embedding = linear(pooled, lease.node("proj.weight"), lease.node("proj.bias"));
    out.embedding = l2_normalize(out.raw_embedding);
    return out;
  }

  /// Global video feature: all stages, then either one max-pool over every
  /// centroid of every frame (pool_frames == 0) or a per-frame max-pool
  /// concatenated in frame order (pool_frames == frame count).
  TensorNode<Scalar> trunk_features(Tape<Scalar>& tape, const Lease<Scalar>& lease,
                                    const Video<Scalar>& frames) const {
    StageOutput<Scalar> cur = spatial_extract(tape, lease, frames);
    for (int s = 1; s < cfg_.num_stages(); ++s) cur = im_pstconv(tape, lease, s, cur);
    const Eigen::Index w = static_cast<Eigen::Index>(stage_out_width_.back());
    if (cfg_.pool_frames == 0) {
      TensorNode<Scalar> all = cur.feats.size() == 1 ? cur.feats[0] : concat(cur.feats, 0);
      auto red = max_reduce(all, 0);
      return reshape(red.values, {1, w});
    }
    if (static_cast<int>(cur.feats.size()) != cfg_.pool_frames)
      throw ArgumentError("trunk_features: pool_frames=" + std::to_string(cfg_.pool_frames) +
                          " but clip has " + std::to_string(cur.feats.size()) + " frames");
    std::vector<TensorNode<Scalar>> per_frame;
    per_frame.reserve(cur.feats.size());
    for (auto& f : cur.feats) per_frame.push_back(reshape(max_reduce(f, 0).values, {1, w}));
    return per_frame.size() == 1 ? per_frame[0] : concat(per_frame, 1);
  }

  /// Linear head over frozen video embeddings (rows of unit vectors).
  TensorNode<Scalar> rgb_logits(const Lease<Scalar>& lease, const TensorNode<Scalar>& video_embeds) const {
    return linear(video_embeds, lease.node("rgb_head.weight"), lease.node("rgb_head.bias"));
  }

  /// One encoder stage. Neighbor rows are assembled temporal-group-major so
  /// the pooled reshape is {groups, centroids, K, width}; max over groups
  /// then K realizes the max over the whole tube.
  StageOutput<Scalar> run_stage(Tape<Scalar>& tape, const Lease<Scalar>& lease, int stage,
                                const Video<Scalar>& frames,
                                const std::vector<TensorNode<Scalar>>& feats) const {
    const int s_s = cfg_.spatial_subsample_rate[static_cast<std::size_t>(stage)];
    const double r = cfg_.radius[static_cast<std::size_t>(stage)];
    const int r_t = stage == 0 ? 0 : cfg_.temporal_radius;
    const int T = static_cast<int>(frames.size());
    if (T == 0) throw ArgumentError("run_stage: empty video");

    int n_prime = static_cast<int>(frames[0].coords.rows()) / s_s;
    for (const auto& fr : frames) {
      const int np_t = static_cast<int>(fr.coords.rows()) / s_s;
      if (np_t < 1)
        throw ArgumentError("run_stage: frame has fewer than S_s=" + std::to_string(s_s) + " points");
      n_prime = std::min(n_prime, np_t);
    }

    NeighborhoodPlan<Scalar> plan = build_plan(frames, n_prime, r, r_t, cfg_.k_nbr);
    return stage_with_plan(tape, lease, stage, frames, feats, plan);
  }

  /// Stage body against an externally supplied plan (tests permute plans to
  /// probe aggregation-order invariance).
  StageOutput<Scalar> stage_with_plan(Tape<Scalar>& tape, const Lease<Scalar>& lease, int stage,
                                      const Video<Scalar>& frames,
                                      const std::vector<TensorNode<Scalar>>& feats,
                                      const NeighborhoodPlan<Scalar>& plan) const {
    const int T = static_cast<int>(frames.size());
    const int k = plan.k_nbr;
    const int groups = 2 * plan.temporal_radius + 1;
    const bool with_feats = stage > 0;
    if (with_feats && static_cast<int>(feats.size()) != T)
      throw ArgumentError("run_stage: feature/frame count mismatch");
    const Scalar inv_r = cfg_.normalize_offsets ? Scalar(1) / Scalar(plan.search_radius) : Scalar(1);

    StageOutput<Scalar> out;
    out.frames.resize(static_cast<std::size_t>(T));
    out.feats.reserve(static_cast<std::size_t>(T));

    for (int t = 0; t < T; ++t) {
      const auto& cents = plan.centroid_indices[static_cast<std::size_t>(t)];
      const auto& tubes = plan.tubes[static_cast<std::size_t>(t)];
      const int np = static_cast<int>(cents.size());
      const Cloud<Scalar>& cloud = frames[static_cast<std::size_t>(t)].coords;

      out.frames[static_cast<std::size_t>(t)].frame_index = frames[static_cast<std::size_t>(t)].frame_index;
      out.frames[static_cast<std::size_t>(t)].coords.resize(np, 3);
      for (int c = 0; c < np; ++c)
        out.frames[static_cast<std::size_t>(t)].coords.row(c) = cloud.row(cents[static_cast<std::size_t>(c)]);

      std::vector<TensorNode<Scalar>> group_rows;
      group_rows.reserve(static_cast<std::size_t>(groups));
      for (int g = 0; g < groups; ++g) {
        // all entries of one group share a frame offset by construction
        const int off = tubes.empty() ? 0 : tubes[0][static_cast<std::size_t>(g * k)].frame_offset;
        const int tf = std::clamp(t + off, 0, T - 1);
        MatRow<Scalar> offs(np * k, 3);
        std::vector<int> nbr_idx(static_cast<std::size_t>(np) * static_cast<std::size_t>(k));
        for (int c = 0; c < np; ++c) {
          const RowVec3<Scalar> center = cloud.row(cents[static_cast<std::size_t>(c)]);
          for (int i = 0; i < k; ++i) {
            const NeighborEntry& e = tubes[static_cast<std::size_t>(c)][static_cast<std::size_t>(g * k + i)];
            if (e.frame_offset != off)
              throw ArgumentError("run_stage: mixed frame offsets within one tube group");
            offs.row(c * k + i) =
                (frames[static_cast<std::size_t>(tf)].coords.row(e.point_index) - center) * inv_r;
            nbr_idx[static_cast<std::size_t>(c * k + i)] = e.point_index;
          }
        }
        TensorNode<Scalar> offs_node = tape.constant({np * k, 3}, offs.data());
        if (!with_feats) {
          group_rows.push_back(offs_node);
          continue;
        }
        TensorNode<Scalar> nbr_feats = gather_rows(feats[static_cast<std::size_t>(tf)], nbr_idx);
        std::vector<TensorNode<Scalar>> parts;
        parts.push_back(nbr_feats);
        if (cfg_.include_center_feature) {
          std::vector<int> center_idx(static_cast<std::size_t>(np) * static_cast<std::size_t>(k));
          for (int c = 0; c < np; ++c)
            for (int i = 0; i < k; ++i)
              center_idx[static_cast<std::size_t>(c * k + i)] = cents[static_cast<std::size_t>(c)];
          parts.push_back(gather_rows(feats[static_cast<std::size_t>(t)], center_idx));
        }
        parts.push_back(offs_node);
        group_rows.push_back(concat(parts, 1));
      }

      TensorNode<Scalar> mlp_in = group_rows.size() == 1 ? group_rows[0] : concat(group_rows, 0);
      TensorNode<Scalar> h = mlp_in;
      for (std::size_t l = 0; l < cfg_.mlp_widths[static_cast<std::size_t>(stage)].size(); ++l) {
        const std::string base = "stage" + std::to_string(stage) + ".mlp" + std::to_string(l);
        h = relu(linear(h, lease.node(base + ".weight"), lease.node(base + ".bias")));
      }
      const Eigen::Index width = h.dim(1);
      h = reshape(h, {groups, np, k, width});
      auto over_groups = max_reduce(h, 0);           // {np, k, width}
      auto over_k = max_reduce(over_groups.values, 1);  // {np, width}
      out.feats.push_back(over_k.values);
    }
    return out;
  }

  void save(const std::string& path) const {
    params_.save(path);
    save_config(path + ".json", cfg_);
  }

  static ImPstNet load(const std::string& path) {
    ImPstNet net(load_config(path + ".json"), /*seed=*/0);
    net.params_.load(path);
    return net;
  }

 private:
  void add_linear(const std::string& base, int in_w, int out_w, std::uint64_t seed, bool wd_exempt,
                  bool wd_exempt_weight = false) {
    Parameter<Scalar>& w =
        params_.add(base + ".weight", {in_w, out_w}, wd_exempt_weight || wd_exempt);
    // Glorot-uniform, streamed per parameter name so registration order
    // cannot shift any other parameter's draw.
    Rng rng(Rng::mix(seed, fnv1a64(base + ".weight")));
    const double limit = std::sqrt(6.0 / (in_w + out_w));
    for (Eigen::Index i = 0; i < w.value.size(); ++i)
      w.value(i) = Scalar((rng.uniform() * 2.0 - 1.0) * limit);
    params_.add(base + ".bias", {out_w}, /*weight_decay_exempt=*/true);
  }

  ImPstNetConfig cfg_;
  ParameterSet<Scalar> params_;
  std::vector<int> stage_out_width_;
};

}  // namespace vg4d
