// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "vg4d/model.hpp"
#include "vg4d/selfcheck.hpp"

using namespace vg4d;

namespace {

// coordinates on a 2^-20 grid so integer translations and power-of-two
// scalings stay exact in double
template <typename Scalar>
Video<Scalar> random_video(Rng& rng, int t_count, int n) {
  Video<Scalar> v(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    v[static_cast<std::size_t>(t)].frame_index = t;
    v[static_cast<std::size_t>(t)].coords.resize(n, 3);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d)
        v[static_cast<std::size_t>(t)].coords(i, d) =
            Scalar(std::round(rng.uniform() * 1048576.0) / 1048576.0);
  }
  return v;
}

ImPstNetConfig micro_config() {
  ImPstNetConfig cfg;
  cfg.spatial_subsample_rate = {2, 2};
  cfg.mlp_widths = {{6}, {8}};
  cfg.radius = {0.8, 1.6};
  cfg.k_nbr = 3;
  cfg.temporal_radius = 1;
  cfg.num_classes = 4;
  cfg.embed_dim = 5;
  return cfg;
}

}  // namespace

TEST_CASE("config validation rejects inconsistent stage lists") {
  ImPstNetConfig cfg = micro_config();
  cfg.mlp_widths = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = micro_config();
  cfg.radius = {0.8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = micro_config();
  cfg.radius = {0.8, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = micro_config();
  cfg.spatial_subsample_rate = {2, 0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = micro_config();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  CHECK_NOTHROW(micro_config().validate());
}

TEST_CASE("parameter registry matches the architecture") {
  ImPstNet<double> net(micro_config(), 7);
  auto& ps = net.params();
  CHECK(ps.contains("stage0.mlp0.weight"));
  CHECK(ps.contains("stage0.mlp0.bias"));
  CHECK(ps.contains("stage1.mlp0.weight"));
  CHECK(ps.contains("cls_head.weight"));
  CHECK(ps.contains("proj.bias"));
  CHECK(ps.contains("rgb_head.weight"));

  // stage0: 3x6 + 6; stage1 input 6+6+3=15: 15x8 + 8; heads from trunk 8
  const Eigen::Index expect = (3 * 6 + 6) + (15 * 8 + 8) + (8 * 4 + 4) + (8 * 5 + 5) + (5 * 4 + 4);
  CHECK(ps.scalar_count() == expect);

  CHECK(ps.at("rgb_head.weight").weight_decay_exempt);
  CHECK(ps.at("cls_head.bias").weight_decay_exempt);
  CHECK(!ps.at("cls_head.weight").weight_decay_exempt);
}

TEST_CASE("initialization is seed-deterministic") {
  ImPstNet<double> a(micro_config(), 7), b(micro_config(), 7), c(micro_config(), 8);
  CHECK((a.params().at("stage0.mlp0.weight").value.array() ==
         b.params().at("stage0.mlp0.weight").value.array())
            .all());
  CHECK(!(a.params().at("stage0.mlp0.weight").value.array() ==
          c.params().at("stage0.mlp0.weight").value.array())
             .all());
}

TEST_CASE("spatial_extract centroid counts follow the subsample rate") {
  Rng rng(13);
  ImPstNetConfig cfg = micro_config();
  cfg.spatial_subsample_rate = {4, 2};
  ImPstNet<double> net(cfg, 1);
  Tape<double> tape;
  Lease<double> lease(net.params(), tape);

  const auto video = random_video<double>(rng, 2, 64);
  const auto out = net.spatial_extract(tape, lease, video);
  REQUIRE(out.frames.size() == 2);
  CHECK(out.frames[0].coords.rows() == 16);  // 64 / 4
  CHECK(out.feats[0].dim(0) == 16);
  CHECK(out.feats[0].dim(1) == 6);

  ImPstNetConfig all = micro_config();
  all.spatial_subsample_rate = {1, 1};
  ImPstNet<double> net1(all, 1);
  Tape<double> tape1;
  Lease<double> lease1(net1.params(), tape1);
  const auto out1 = net1.spatial_extract(tape1, lease1, video);
  CHECK(out1.frames[0].coords.rows() == 64);
}

TEST_CASE("duplicating an already-included neighbor leaves features unchanged") {
  Rng rng(21);
  ImPstNetConfig cfg = micro_config();
  cfg.mlp_widths = {{6}};
  cfg.spatial_subsample_rate = {1};
  cfg.radius = {2.0};
  cfg.k_nbr = 2;
  ImPstNet<double> net(cfg, 3);

  Video<double> video = random_video<double>(rng, 1, 3);
  NeighborhoodPlan<double> base;
  base.search_radius = 2.0;
  base.temporal_radius = 0;
  base.k_nbr = 2;
  base.centroid_indices = {{0}};
  base.tubes = {{{NeighborEntry{0, 1}, NeighborEntry{0, 2}}}};

  NeighborhoodPlan<double> padded = base;
  padded.k_nbr = 3;
  padded.tubes = {{{NeighborEntry{0, 1}, NeighborEntry{0, 2}, NeighborEntry{0, 2}}}};

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  const auto a = net.stage_with_plan(tape, lease, 0, video, {}, base);
  const auto b = net.stage_with_plan(tape, lease, 0, video, {}, padded);
  CHECK((a.feats[0].values().array() == b.feats[0].values().array()).all());
}

TEST_CASE("outputs are bit-identical under global translation") {
  Rng rng(31);
  ImPstNet<double> net(micro_config(), 5);
  const Video<double> video = random_video<double>(rng, 3, 16);
  Video<double> moved = video;
  for (auto& fr : moved) {
    fr.coords.col(0).array() += 5.0;
    fr.coords.col(1).array() -= 3.0;
    fr.coords.col(2).array() += 2.0;
  }

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  const auto a = net.forward(tape, lease, video);
  const auto b = net.forward(tape, lease, moved);
  CHECK((a.logits.values().array() == b.logits.values().array()).all());
  CHECK((a.embedding.values().array() == b.embedding.values().array()).all());
}

TEST_CASE("identity MLP on a self-neighbor reproduces the concat vector") {
  ImPstNetConfig cfg;
  cfg.spatial_subsample_rate = {1, 1};
  cfg.mlp_widths = {{2}, {5}};  // stage1 input = 2 + 3 = 5
  cfg.radius = {1.0, 1.0};
  cfg.k_nbr = 1;
  cfg.temporal_radius = 0;
  cfg.num_classes = 2;
  cfg.embed_dim = 2;
  cfg.include_center_feature = false;
  cfg.normalize_offsets = false;
  ImPstNet<double> net(cfg, 0);
  auto& w = net.params().at("stage1.mlp0.weight");
  w.value.setZero();
  for (int i = 0; i < 5; ++i) w.value(i * 5 + i) = 1.0;  // identity
  net.params().at("stage1.mlp0.bias").value.setZero();

  Video<double> video(1);
  video[0].frame_index = 0;
  video[0].coords.resize(1, 3);
  video[0].coords << 0.3, 0.4, 0.5;

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  StageOutput<double> in;
  in.frames = video;
  const double fv[2] = {0.5, 0.25};
  in.feats = {tape.constant({1, 2}, fv)};
  const auto out = net.im_pstconv(tape, lease, 1, in);
  REQUIRE(out.feats[0].size() == 5);
  CHECK(out.feats[0].values()(0) == 0.5);
  CHECK(out.feats[0].values()(1) == 0.25);
  CHECK(out.feats[0].values()(2) == 0.0);  // zero offset to itself
  CHECK(out.feats[0].values()(3) == 0.0);
  CHECK(out.feats[0].values()(4) == 0.0);
}

TEST_CASE("im_pstconv matches the nested-loop reference") {
  const auto results = selfcheck::oracle_suite_conv(6, 2024);
  CHECK(!results.empty());
  for (const auto& r : results) {
    INFO(r.name, " err=", r.err, " (", r.detail, ")");
    CHECK(r.pass);
  }
}

TEST_CASE("forward contract: embedding is unit, logits sized K") {
  Rng rng(71);
  for (int k : {2, 8, 60}) {
    ImPstNetConfig cfg = micro_config();
    cfg.num_classes = k;
    ImPstNet<double> net(cfg, 17);
    Tape<double> tape;
    Lease<double> lease(net.params(), tape);
    const auto video = random_video<double>(rng, 2, 8);
    const auto fwd = net.forward(tape, lease, video);
    CHECK(fwd.logits.size() == k);
    CHECK(fwd.embedding.size() == 5);
    double norm = 0;
    for (int i = 0; i < 5; ++i) norm += fwd.embedding.values()(i) * fwd.embedding.values()(i);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("logits are invariant to point permutation under full neighborhoods") {
  Rng rng(83);
  ImPstNetConfig cfg = micro_config();
  cfg.spatial_subsample_rate = {1, 1};
  cfg.k_nbr = 8;     // >= points per frame
  cfg.radius = {4.0, 4.0};  // covers the whole cube
  ImPstNet<double> net(cfg, 9);

  const auto video = random_video<double>(rng, 2, 8);
  Video<double> permuted = video;
  for (auto& fr : permuted) {
    std::vector<int> perm(8);
    for (int i = 0; i < 8; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    Cloud<double> shuffled(8, 3);
    for (int i = 0; i < 8; ++i) shuffled.row(i) = fr.coords.row(perm[static_cast<std::size_t>(i)]);
    fr.coords = shuffled;
  }

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  const auto a = net.forward(tape, lease, video);
  const auto b = net.forward(tape, lease, permuted);
  double max_diff = 0;
  for (int i = 0; i < 4; ++i)
    max_diff = std::max(max_diff, std::abs(a.logits.values()(i) - b.logits.values()(i)));
  CHECK(max_diff < 1e-4);
}

TEST_CASE("scaling coordinates and radii together is bit-exact") {
  Rng rng(89);
  ImPstNetConfig cfg = micro_config();
  cfg.normalize_offsets = true;
  ImPstNet<double> net(cfg, 9);

  ImPstNetConfig scaled_cfg = cfg;
  scaled_cfg.radius = {cfg.radius[0] * 2.0, cfg.radius[1] * 2.0};
  ImPstNet<double> scaled_net(scaled_cfg, 9);

  const auto video = random_video<double>(rng, 2, 12);
  Video<double> scaled = video;
  for (auto& fr : scaled) fr.coords *= 2.0;

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  const auto a = net.forward(tape, lease, video);
  Tape<double> tape2;
  Lease<double> lease2(scaled_net.params(), tape2);
  const auto b = scaled_net.forward(tape2, lease2, scaled);
  CHECK((a.logits.values().array() == b.logits.values().array()).all());
}

TEST_CASE("save/load round-trips config and parameters") {
  ImPstNet<float> net(micro_config(), 77);
  const auto dir = std::filesystem::temp_directory_path() / "vg4d_test_model_ckpt";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "net.ckpt").string();
  net.save(path);

  auto back = ImPstNet<float>::load(path);
  CHECK(back.config().k_nbr == net.config().k_nbr);
  CHECK(back.config().mlp_widths == net.config().mlp_widths);
  CHECK(back.config().normalize_offsets == net.config().normalize_offsets);
  for (const auto& p : net.params()) {
    const auto& q = back.params().at(p.name);
    CHECK((p.value.array() == q.value.array()).all());
  }

  Rng rng(101);
  const auto video = random_video<float>(rng, 2, 8);
  Tape<float> ta;
  Lease<float> la(net.params(), ta);
  Tape<float> tb;
  Lease<float> lb(back.params(), tb);
  const auto fa = net.forward(ta, la, video);
  const auto fb = back.forward(tb, lb, video);
  CHECK((fa.logits.values().array() == fb.logits.values().array()).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("model config json sidecar round-trip") {
  ImPstNetConfig cfg = micro_config();
  cfg.normalize_offsets = false;
  cfg.pool_frames = 3;
  const ImPstNetConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.spatial_subsample_rate == cfg.spatial_subsample_rate);
  CHECK(back.mlp_widths == cfg.mlp_widths);
  CHECK(back.radius == cfg.radius);
  CHECK(back.k_nbr == cfg.k_nbr);
  CHECK(back.temporal_radius == cfg.temporal_radius);
  CHECK(back.num_classes == cfg.num_classes);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.normalize_offsets == cfg.normalize_offsets);
  CHECK(back.include_center_feature == cfg.include_center_feature);
  CHECK(back.pool_frames == cfg.pool_frames);
  CHECK_THROWS_AS(config_from_json("{not json"), ConfigError);

  // sidecars written before the field existed default to order-free pooling
  const ImPstNetConfig old = config_from_json(R"({
    "spatial_subsample_rate": [2], "mlp_widths": [[4]], "radius": [0.5],
    "k_nbr": 2, "temporal_radius": 1, "num_classes": 2, "embed_dim": 3,
    "normalize_offsets": true, "include_center_feature": true})");
  CHECK(old.pool_frames == 0);
}

TEST_CASE("frame-ordered pooling concatenates per-frame maxima in order") {
  Rng rng(404);
  const int T = 3;
  const Video<double> video = random_video<double>(rng, T, 8);

  ImPstNetConfig cfg = micro_config();
  cfg.pool_frames = T;
  ImPstNet<double> net(cfg, 11);

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  const TensorNode<double> pooled = net.trunk_features(tape, lease, video);
  const int w = net.stage_out_width(1);
  REQUIRE(pooled.dim(0) == 1);
  REQUIRE(pooled.dim(1) == T * w);

  // block t of the pooled row equals the max over frame t's centroid features
  StageOutput<double> cur = net.spatial_extract(tape, lease, video);
  cur = net.im_pstconv(tape, lease, 1, cur);
  for (int t = 0; t < T; ++t) {
    const auto m = max_reduce(cur.feats[static_cast<std::size_t>(t)], 0);
    for (int c = 0; c < w; ++c)
      CHECK(pooled.values()(t * w + c) == m.values.values()(c));
  }

  // heads consume the widened trunk
  const auto out = net.forward(tape, lease, video);
  CHECK(out.logits.dim(1) == cfg.num_classes);
  CHECK(out.embedding.dim(1) == cfg.embed_dim);

  // clip length must match exactly
  const Video<double> longer = random_video<double>(rng, T + 1, 8);
  CHECK_THROWS_AS(net.forward(tape, lease, longer), ArgumentError);
}

TEST_CASE("order-free pooling equals the elementwise max of per-frame maxima") {
  Rng rng(405);
  const Video<double> video = random_video<double>(rng, 3, 8);
  ImPstNetConfig cfg = micro_config();  // pool_frames = 0
  ImPstNet<double> net(cfg, 12);

  Tape<double> tape;
  Lease<double> lease(net.params(), tape);
  const TensorNode<double> pooled = net.trunk_features(tape, lease, video);

  StageOutput<double> cur = net.spatial_extract(tape, lease, video);
  cur = net.im_pstconv(tape, lease, 1, cur);
  const int w = net.stage_out_width(1);
  for (int c = 0; c < w; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& f : cur.feats)
      best = std::max(best, max_reduce(f, 0).values.values()(c));
    CHECK(pooled.values()(c) == best);
  }
}
