// SPDX-License-Identifier: Apache-2.0
//
// Point-set sampling and spatio-temporal neighborhood construction. All
// functions are pure and deterministic; ties resolve to the lowest index.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vg4d/common.hpp"

namespace vg4d {

template <typename Scalar>
using Cloud = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

template <typename Scalar>
struct FrameCloud {
  Cloud<Scalar> coords;
  int frame_index = 0;
};

template <typename Scalar>
using Video = std::vector<FrameCloud<Scalar>>;

template <typename Scalar>
void check_cloud(const Cloud<Scalar>& c, const char* what) {
  if (c.rows() < 1) throw ArgumentError(std::string(what) + ": empty cloud");
  if (!c.allFinite()) throw ArgumentError(std::string(what) + ": non-finite coordinates");
}

/// Farthest point sampling. Seed is index 0; each subsequent pick maximizes
/// the minimum squared distance to the selected set, ties to lowest index.
template <typename Scalar>
std::vector<int> fps(const Cloud<Scalar>& coords, int m) {
  check_cloud(coords, "fps");
  const int n = static_cast<int>(coords.rows());
  if (m < 1 || m > n)
    throw ArgumentError("fps: m=" + std::to_string(m) + " outside [1," + std::to_string(n) + "]");
  std::vector<int> picks;
  picks.reserve(static_cast<std::size_t>(m));
  picks.push_back(0);
  VecX<Scalar> min_d2 = (coords.rowwise() - coords.row(0)).rowwise().squaredNorm();
  for (int s = 1; s < m; ++s) {
    int best = 0;
    Scalar best_d2 = min_d2(0);
    for (int i = 1; i < n; ++i) {
      if (min_d2(i) > best_d2) {
        best_d2 = min_d2(i);
        best = i;
      }
    }
    picks.push_back(best);
    min_d2 = min_d2.cwiseMin((coords.rowwise() - coords.row(best)).rowwise().squaredNorm());
  }
  return picks;
}

/// Points within r of the centroid, sorted by (distance, index), truncated to
/// k. Short lists repeat the first entry; an empty ball yields k copies of
/// the globally nearest point so pooling never sees fabricated geometry.
template <typename Scalar>
std::vector<int> radius_neighbors(const RowVec3<Scalar>& centroid, const Cloud<Scalar>& cloud, double r,
                                  int k) {
  check_cloud(cloud, "radius_neighbors");
  if (!(r > 0)) throw ArgumentError("radius_neighbors: r must be positive");
  if (k < 1) throw ArgumentError("radius_neighbors: K_nbr must be >= 1");
  const Scalar r2 = Scalar(r) * Scalar(r);
  const int n = static_cast<int>(cloud.rows());
  std::vector<std::pair<Scalar, int>> in_ball;
  Scalar nearest_d2 = std::numeric_limits<Scalar>::infinity();
  int nearest = 0;
  for (int i = 0; i < n; ++i) {
    const Scalar d2 = (cloud.row(i) - centroid).squaredNorm();
    if (d2 <= r2) in_ball.emplace_back(d2, i);
    if (d2 < nearest_d2) {
      nearest_d2 = d2;
      nearest = i;
    }
  }
  std::sort(in_ball.begin(), in_ball.end());
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  if (in_ball.empty()) {
    out.assign(static_cast<std::size_t>(k), nearest);
    return out;
  }
  for (int i = 0; i < k; ++i) {
    const std::size_t src = static_cast<std::size_t>(i) < in_ball.size() ? static_cast<std::size_t>(i) : 0;
    out.push_back(in_ball[src].second);
  }
  return out;
}

struct NeighborEntry {
  int frame_offset;  // relative to the centroid's frame, clamped offsets keep their nominal value
  int point_index;   // into the clamped frame's cloud
};

/// Per-offset neighbor lists over the temporal window −r_t..+r_t. Window
/// frames clamp to the video boundary; each offset contributes exactly k
/// entries, so the total is (2·r_t+1)·k.
template <typename Scalar>
std::vector<NeighborEntry> tube_neighbors(const RowVec3<Scalar>& centroid, const Video<Scalar>& frames,
                                          int t, double r, int r_t, int k) {
  if (frames.empty()) throw ArgumentError("tube_neighbors: empty video");
  if (t < 0 || t >= static_cast<int>(frames.size()))
    throw ArgumentError("tube_neighbors: frame " + std::to_string(t) + " out of range");
  if (r_t < 0) throw ArgumentError("tube_neighbors: r_t must be >= 0");
  const int last = static_cast<int>(frames.size()) - 1;
  std::vector<NeighborEntry> out;
  out.reserve(static_cast<std::size_t>((2 * r_t + 1) * k));
  for (int off = -r_t; off <= r_t; ++off) {
    const int tf = std::clamp(t + off, 0, last);
    const std::vector<int> idx = radius_neighbors(centroid, frames[static_cast<std::size_t>(tf)].coords, r, k);
    for (int i : idx) out.push_back({off, i});
  }
  return out;
}

/// Index structure for one im-PSTConv stage: per-frame centroids from fps and
/// per-centroid spatio-temporal neighbor tubes.
template <typename Scalar>
struct NeighborhoodPlan {
  std::vector<std::vector<int>> centroid_indices;              // [frame][centroid]
  std::vector<std::vector<std::vector<NeighborEntry>>> tubes;  // [frame][centroid][(2r_t+1)*k]
  double search_radius = 0;
  int temporal_radius = 0;
  int k_nbr = 0;
};

template <typename Scalar>
NeighborhoodPlan<Scalar> build_plan(const Video<Scalar>& frames, int centroids_per_frame, double r, int r_t,
                                    int k) {
  if (frames.empty()) throw ArgumentError("build_plan: empty video");
  NeighborhoodPlan<Scalar> plan;
  plan.search_radius = r;
  plan.temporal_radius = r_t;
  plan.k_nbr = k;
  const int T = static_cast<int>(frames.size());
  plan.centroid_indices.resize(static_cast<std::size_t>(T));
  plan.tubes.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const Cloud<Scalar>& cloud = frames[static_cast<std::size_t>(t)].coords;
    plan.centroid_indices[static_cast<std::size_t>(t)] = fps(cloud, centroids_per_frame);
    auto& per_frame = plan.tubes[static_cast<std::size_t>(t)];
    per_frame.reserve(static_cast<std::size_t>(centroids_per_frame));
    for (int ci : plan.centroid_indices[static_cast<std::size_t>(t)]) {
      const RowVec3<Scalar> c = cloud.row(ci);
      per_frame.push_back(tube_neighbors(c, frames, t, r, r_t, k));
    }
  }
  return plan;
}

/// Structural validation: index bounds, window bounds, list lengths, and the
/// distance contract (a group either lies entirely within r, or is an
/// empty-ball pad of k identical out-of-ball entries).
template <typename Scalar>
void validate_plan(const NeighborhoodPlan<Scalar>& plan, const Video<Scalar>& frames) {
  const int T = static_cast<int>(frames.size());
  if (static_cast<int>(plan.centroid_indices.size()) != T || static_cast<int>(plan.tubes.size()) != T)
    throw ArgumentError("validate_plan: frame count mismatch");
  const int groups = 2 * plan.temporal_radius + 1;
  const Scalar r = Scalar(plan.search_radius);
  for (int t = 0; t < T; ++t) {
    const Cloud<Scalar>& cloud = frames[static_cast<std::size_t>(t)].coords;
    const auto& cents = plan.centroid_indices[static_cast<std::size_t>(t)];
    const auto& tubes = plan.tubes[static_cast<std::size_t>(t)];
    if (cents.size() != tubes.size()) throw ArgumentError("validate_plan: centroid/tube count mismatch");
    for (std::size_t c = 0; c < cents.size(); ++c) {
      if (cents[c] < 0 || cents[c] >= cloud.rows())
        throw ArgumentError("validate_plan: centroid index out of bounds");
      const RowVec3<Scalar> center = cloud.row(cents[c]);
      const auto& tube = tubes[c];
      if (static_cast<int>(tube.size()) != groups * plan.k_nbr)
        throw ArgumentError("validate_plan: tube length != (2*r_t+1)*K_nbr");
      for (int g = 0; g < groups; ++g) {
        const NeighborEntry& head = tube[static_cast<std::size_t>(g * plan.k_nbr)];
        if (std::abs(head.frame_offset) > plan.temporal_radius)
          throw ArgumentError("validate_plan: frame offset outside temporal radius");
        const int tf = std::clamp(t + head.frame_offset, 0, T - 1);
        const Cloud<Scalar>& nb_cloud = frames[static_cast<std::size_t>(tf)].coords;
        const Scalar head_d =
            (nb_cloud.row(head.point_index) - center).norm();
        const bool padded_empty = head_d > r;
        for (int i = 0; i < plan.k_nbr; ++i) {
          const NeighborEntry& e = tube[static_cast<std::size_t>(g * plan.k_nbr + i)];
          if (e.frame_offset != head.frame_offset)
            throw ArgumentError("validate_plan: mixed offsets within one group");
          if (e.point_index < 0 || e.point_index >= nb_cloud.rows())
            throw ArgumentError("validate_plan: neighbor index out of bounds");
          if (padded_empty) {
            if (e.point_index != head.point_index)
              throw ArgumentError("validate_plan: empty-ball group must repeat the nearest point");
          } else if ((nb_cloud.row(e.point_index) - center).norm() > r) {
            throw ArgumentError("validate_plan: neighbor outside search radius");
          }
        }
      }
    }
  }
}

/// Per-neighbor displacement (x_j^{t'} − x_i^t), divided by the search radius
/// when `normalize` is set. Rows are grouped centroid-major, then temporal
/// offset, then neighbor rank.
template <typename Scalar>
std::vector<MatRow<Scalar>> relative_offsets(const NeighborhoodPlan<Scalar>& plan,
                                             const Video<Scalar>& frames, bool normalize) {
  const int T = static_cast<int>(frames.size());
  const int per_tube = (2 * plan.temporal_radius + 1) * plan.k_nbr;
  const Scalar inv_r = normalize ? Scalar(1) / Scalar(plan.search_radius) : Scalar(1);
  std::vector<MatRow<Scalar>> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& cents = plan.centroid_indices[static_cast<std::size_t>(t)];
    MatRow<Scalar> m(static_cast<Eigen::Index>(cents.size()) * per_tube, 3);
    const Cloud<Scalar>& cloud = frames[static_cast<std::size_t>(t)].coords;
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < cents.size(); ++c) {
      const RowVec3<Scalar> center = cloud.row(cents[c]);
      for (const NeighborEntry& e : plan.tubes[static_cast<std::size_t>(t)][c]) {
        const int tf = std::clamp(t + e.frame_offset, 0, T - 1);
        m.row(row++) =
            (frames[static_cast<std::size_t>(tf)].coords.row(e.point_index) - center) * inv_r;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace vg4d
