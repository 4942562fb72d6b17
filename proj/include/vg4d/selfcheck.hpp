// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles and finite-difference suites. Everything here is
// deliberately written straight-line (plain loops, no helpers shared with the
// production code paths) so it can contradict the implementations it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vg4d/align.hpp"
#include "vg4d/data.hpp"
#include "vg4d/geom.hpp"
#include "vg4d/model.hpp"
#include "vg4d/tensor.hpp"

namespace vg4d::selfcheck {

struct CheckResult {
  std::string name;
  double err = 0;
  double tol = 0;
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Geometry oracles (plain recomputation)
// ---------------------------------------------------------------------------

/// Greedy max-min selection recomputing every candidate-to-set minimum from
/// scratch each round. O(n^2 m).
template <typename Scalar>
std::vector<int> brute_force_fps(const Cloud<Scalar>& coords, int m) {
  const int n = static_cast<int>(coords.rows());
  std::vector<int> picks{0};
  while (static_cast<int>(picks.size()) < m) {
    int best = -1;
    Scalar best_min = Scalar(-1);
    for (int i = 0; i < n; ++i) {
      Scalar mind = std::numeric_limits<Scalar>::infinity();
      for (int p : picks) {
        Scalar d2 = Scalar(0);
        for (int d = 0; d < 3; ++d) {
          const Scalar diff = coords(i, d) - coords(p, d);
          d2 += diff * diff;
        }
        if (d2 < mind) mind = d2;
      }
      if (mind > best_min) {
        best_min = mind;
        best = i;
      }
    }
    picks.push_back(best);
  }
  return picks;
}

template <typename Scalar>
std::vector<int> brute_force_radius(const RowVec3<Scalar>& centroid, const Cloud<Scalar>& cloud, double r,
                                    int k) {
  const int n = static_cast<int>(cloud.rows());
  std::vector<std::pair<Scalar, int>> all;
  for (int i = 0; i < n; ++i) {
    Scalar d2 = Scalar(0);
    for (int d = 0; d < 3; ++d) {
      const Scalar diff = cloud(i, d) - centroid(d);
      d2 += diff * diff;
    }
    all.emplace_back(d2, i);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::pair<Scalar, int>> inside;
  for (const auto& [d2, i] : all)
    if (d2 <= Scalar(r) * Scalar(r)) inside.emplace_back(d2, i);
  std::vector<int> out;
  if (inside.empty()) {
    out.assign(static_cast<std::size_t>(k), all.front().second);
    return out;
  }
  for (int i = 0; i < k; ++i)
    out.push_back(i < static_cast<int>(inside.size()) ? inside[static_cast<std::size_t>(i)].second
                                                      : inside.front().second);
  return out;
}

template <typename Scalar>
std::vector<NeighborEntry> brute_force_tube(const RowVec3<Scalar>& centroid, const Video<Scalar>& frames,
                                            int t, double r, int r_t, int k) {
  std::vector<NeighborEntry> out;
  const int last = static_cast<int>(frames.size()) - 1;
  for (int off = -r_t; off <= r_t; ++off) {
    int tf = t + off;
    if (tf < 0) tf = 0;
    if (tf > last) tf = last;
    for (int i : brute_force_radius(centroid, frames[static_cast<std::size_t>(tf)].coords, r, k))
      out.push_back({off, i});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nested-loop reference of the point-tube convolution
// ---------------------------------------------------------------------------

struct RefStageConfig {
  int s_s = 1;
  double r = 1.0;
  int r_t = 0;
  int k = 2;
  bool normalize_offsets = false;
  bool include_center_feature = false;
};

/// Straight-line evaluation: own FPS, own ball search, scalar-loop MLP,
/// elementwise max over the whole tube. `feats` empty means the purely
/// spatial stage (offsets are the only MLP input and the temporal window is
/// a single frame).
inline std::vector<MatRow<double>> reference_stage(const std::vector<MatRow<double>>& coords,
                                                   const std::vector<MatRow<double>>& feats,
                                                   const std::vector<MatRow<double>>& mlp_w,
                                                   const std::vector<VecX<double>>& mlp_b,
                                                   const RefStageConfig& cfg) {
  const int T = static_cast<int>(coords.size());
  const bool with_feats = !feats.empty();
  const int r_t = with_feats ? cfg.r_t : 0;

  int n_prime = static_cast<int>(coords[0].rows()) / cfg.s_s;
  for (const auto& c : coords) n_prime = std::min(n_prime, static_cast<int>(c.rows()) / cfg.s_s);

  std::vector<MatRow<double>> out;
  for (int t = 0; t < T; ++t) {
    const std::vector<int> cents = brute_force_fps(Cloud<double>(coords[static_cast<std::size_t>(t)]), n_prime);
    MatRow<double> frame_out(n_prime, mlp_w.back().cols());
    for (int c = 0; c < n_prime; ++c) {
      const int ci = cents[static_cast<std::size_t>(c)];
      VecX<double> h;
      bool first = true;
      for (int off = -r_t; off <= r_t; ++off) {
        int tf = t + off;
        if (tf < 0) tf = 0;
        if (tf > T - 1) tf = T - 1;
        const RowVec3<double> center = coords[static_cast<std::size_t>(t)].row(ci);
        const std::vector<int> nbrs =
            brute_force_radius<double>(center, Cloud<double>(coords[static_cast<std::size_t>(tf)]), cfg.r, cfg.k);
        for (int j : nbrs) {
          std::vector<double> in;
          if (with_feats) {
            for (Eigen::Index q = 0; q < feats[static_cast<std::size_t>(tf)].cols(); ++q)
              in.push_back(feats[static_cast<std::size_t>(tf)](j, q));
            if (cfg.include_center_feature)
              for (Eigen::Index q = 0; q < feats[static_cast<std::size_t>(t)].cols(); ++q)
                in.push_back(feats[static_cast<std::size_t>(t)](ci, q));
          }
          for (int d = 0; d < 3; ++d) {
            double o = coords[static_cast<std::size_t>(tf)](j, d) - center(d);
            if (cfg.normalize_offsets) o /= cfg.r;
            in.push_back(o);
          }
          // MLP: y = relu(W^T x + b) per layer, weights stored {in, out}
          std::vector<double> x = in;
          for (std::size_t l = 0; l < mlp_w.size(); ++l) {
            std::vector<double> y(static_cast<std::size_t>(mlp_w[l].cols()), 0.0);
            for (Eigen::Index o = 0; o < mlp_w[l].cols(); ++o) {
              double acc = mlp_b[l](o);
              for (Eigen::Index q = 0; q < mlp_w[l].rows(); ++q)
                acc += x[static_cast<std::size_t>(q)] * mlp_w[l](q, o);
              y[static_cast<std::size_t>(o)] = acc > 0 ? acc : 0.0;
            }
            x = y;
          }
          if (first) {
            h = Eigen::Map<VecX<double>>(x.data(), static_cast<Eigen::Index>(x.size()));
            first = false;
          } else {
            for (std::size_t q = 0; q < x.size(); ++q)
              h(static_cast<Eigen::Index>(q)) = std::max(h(static_cast<Eigen::Index>(q)), x[q]);
          }
        }
      }
      frame_out.row(c) = h.transpose();
    }
    out.push_back(std::move(frame_out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

inline double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({1.0, std::abs(a), std::abs(f)});
}

/// Max normalized error between analytic gradients and central differences
/// over every component of every input leaf.
inline double fd_max_err(
    const std::vector<Shape>& shapes, std::vector<VecX<double>> x0,
    const std::function<TensorNode<double>(Tape<double>&, const std::vector<TensorNode<double>>&)>& build,
    double h = 1e-5) {
  std::vector<VecX<double>> grads;
  {
    Tape<double> tape;
    std::vector<TensorNode<double>> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      leaves.push_back(tape.leaf(shapes[i], x0[i], /*requires_grad=*/true));
    TensorNode<double> loss = build(tape, leaves);
    tape.backward(loss);
    for (const auto& leaf : leaves) grads.emplace_back(leaf.gradient());
  }
  const auto eval = [&](const std::vector<VecX<double>>& xs) {
    Tape<double> tape;
    std::vector<TensorNode<double>> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      leaves.push_back(tape.leaf(shapes[i], xs[i], /*requires_grad=*/false));
    return build(tape, leaves).scalar();
  };
  double worst = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    for (Eigen::Index c = 0; c < x0[i].size(); ++c) {
      const double keep = x0[i](c);
      x0[i](c) = keep + h;
      const double up = eval(x0);
      x0[i](c) = keep - h;
      const double dn = eval(x0);
      x0[i](c) = keep;
      worst = std::max(worst, rel_err(grads[i](c), (up - dn) / (2 * h)));
    }
  }
  return worst;
}

namespace detail {

/// Fixed-direction scalarization so gradients are not trivially uniform. The
/// direction must be drawn once per instance, outside the build callback, or
/// the analytic pass and the difference probes would see different losses.
inline TensorNode<double> pin(Tape<double>& tape, const TensorNode<double>& x, const VecX<double>& w) {
  const Eigen::Index n = x.size();
  TensorNode<double> wn = tape.leaf({n, 1}, w, false);
  return matmul(reshape(x, {1, n}), wn);
}

inline VecX<double> rand_vec(Rng& rng, Eigen::Index n, double lo, double hi) {
  VecX<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = lo + (hi - lo) * rng.uniform();
  return v;
}

/// Uniform values rejected until every pair along the reduced axis differs by
/// more than `gap` (keeps max_reduce away from ties under FD probes).
inline VecX<double> rand_vec_gapped(Rng& rng, const Shape& shape, int axis, double gap) {
  const Eigen::Index n = numel(shape);
  VecX<double> v(n);
  Eigen::Index outer = 1, len = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
  len = shape[static_cast<std::size_t>(axis)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d) inner *= shape[d];
  for (Eigen::Index o = 0; o < outer; ++o)
    for (Eigen::Index in = 0; in < inner; ++in) {
      while (true) {
        for (Eigen::Index l = 0; l < len; ++l) v((o * len + l) * inner + in) = rng.uniform() * 4.0 - 2.0;
        bool ok = true;
        for (Eigen::Index a = 0; a < len && ok; ++a)
          for (Eigen::Index b = a + 1; b < len && ok; ++b)
            ok = std::abs(v((o * len + a) * inner + in) - v((o * len + b) * inner + in)) > gap;
        if (ok) break;
      }
    }
  return v;
}

/// Values bounded away from zero (keeps relu kinks outside the FD window).
inline VecX<double> rand_vec_off_zero(Rng& rng, Eigen::Index n, double margin) {
  VecX<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double x;
    do {
      x = rng.uniform() * 4.0 - 2.0;
    } while (std::abs(x) < margin);
    v(i) = x;
  }
  return v;
}

}  // namespace detail

/// Per-op finite-difference checks, one result per op, max error across
/// `num_seeds` deterministic seeds.
inline std::vector<CheckResult> gradcheck_ops(int num_seeds, std::uint64_t base_seed, double tol = 1e-5) {
  struct Case {
    std::string name;
    std::function<double(Rng&)> run;  // returns fd_max_err for one seed
  };
  using Nodes = std::vector<TensorNode<double>>;

  std::vector<Case> cases;
  cases.push_back({"matmul", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 12, -1, 1);
                     auto b = detail::rand_vec(rng, 8, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 6, -1, 1);
                     return fd_max_err({{3, 4}, {4, 2}}, {a, b},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, matmul(xs[0], xs[1]), w);
                                       });
                   }});
  cases.push_back({"add", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 6, -1, 1);
                     auto b = detail::rand_vec(rng, 6, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 6, -1, 1);
                     return fd_max_err({{2, 3}, {2, 3}}, {a, b},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, add(xs[0], xs[1]), w);
                                       });
                   }});
  cases.push_back({"scale", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 5, -2, 2);
                     const VecX<double> w = detail::rand_vec(rng, 5, -1, 1);
                     return fd_max_err({{5}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, scale(xs[0], -1.7), w);
                                       });
                   }});
  cases.push_back({"relu", [](Rng& rng) {
                     auto a = detail::rand_vec_off_zero(rng, 8, 1e-3);
                     const VecX<double> w = detail::rand_vec(rng, 8, -1, 1);
                     return fd_max_err({{8}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, relu(xs[0]), w);
                                       });
                   }});
  cases.push_back({"log", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 6, 0.5, 2.0);
                     const VecX<double> w = detail::rand_vec(rng, 6, -1, 1);
                     return fd_max_err({{6}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, vg4d::log(xs[0]), w);
                                       });
                   }});
  cases.push_back({"exp", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 6, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 6, -1, 1);
                     return fd_max_err({{6}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, vg4d::exp(xs[0]), w);
                                       });
                   }});
  cases.push_back({"sum", [](Rng& rng) {
                     return fd_max_err({{3, 3}}, {detail::rand_vec(rng, 9, -1, 1)},
                                       [](Tape<double>&, const Nodes& xs) { return sum(xs[0]); });
                   }});
  cases.push_back({"add_bias", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 12, -1, 1);
                     auto b = detail::rand_vec(rng, 3, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 12, -1, 1);
                     return fd_max_err({{4, 3}, {3}}, {a, b},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, add_bias(xs[0], xs[1]), w);
                                       });
                   }});
  cases.push_back({"linear", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 12, -1, 1);
                     auto b = detail::rand_vec(rng, 6, -1, 1);
                     auto c = detail::rand_vec(rng, 2, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 8, -1, 1);
                     return fd_max_err({{4, 3}, {3, 2}, {2}}, {a, b, c},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, linear(xs[0], xs[1], xs[2]), w);
                                       });
                   }});
  cases.push_back({"concat_axis0", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 6, -1, 1);
                     auto b = detail::rand_vec(rng, 3, -1, 1);
                     auto c = detail::rand_vec(rng, 9, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 18, -1, 1);
                     return fd_max_err({{2, 3}, {1, 3}, {3, 3}}, {a, b, c},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, concat(Nodes{xs[0], xs[1], xs[2]}, 0), w);
                                       });
                   }});
  cases.push_back({"concat_axis1", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 4, -1, 1);
                     auto b = detail::rand_vec(rng, 6, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 10, -1, 1);
                     return fd_max_err({{2, 2}, {2, 3}}, {a, b},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, concat(Nodes{xs[0], xs[1]}, 1), w);
                                       });
                   }});
  cases.push_back({"reshape", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 12, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 12, -1, 1);
                     return fd_max_err({{2, 6}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, reshape(xs[0], {3, 4}), w);
                                       });
                   }});
  cases.push_back({"gather_rows", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 12, -1, 1);
                     const VecX<double> w = detail::rand_vec(rng, 18, -1, 1);
                     return fd_max_err({{4, 3}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         // repeated index exercises scatter-add
                                         return detail::pin(t, gather_rows(xs[0], {2, 0, 2, 3, 1, 2}), w);
                                       });
                   }});
  cases.push_back({"max_reduce_axis0", [](Rng& rng) {
                     auto a = detail::rand_vec_gapped(rng, {4, 3}, 0, 1e-3);
                     const VecX<double> w = detail::rand_vec(rng, 3, -1, 1);
                     return fd_max_err({{4, 3}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, max_reduce(xs[0], 0).values, w);
                                       });
                   }});
  cases.push_back({"max_reduce_axis1", [](Rng& rng) {
                     auto a = detail::rand_vec_gapped(rng, {2, 5, 3}, 1, 1e-3);
                     const VecX<double> w = detail::rand_vec(rng, 6, -1, 1);
                     return fd_max_err({{2, 5, 3}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, max_reduce(xs[0], 1).values, w);
                                       });
                   }});
  cases.push_back({"softmax", [](Rng& rng) {
                     auto a = detail::rand_vec(rng, 12, -2, 2);
                     const VecX<double> w = detail::rand_vec(rng, 12, -1, 1);
                     return fd_max_err({{3, 4}}, {a},
                                       [w](Tape<double>& t, const Nodes& xs) {
                                         return detail::pin(t, softmax(xs[0], 1), w);
                                       });
                   }});
  cases.push_back({"l2_normalize", [](Rng& rng) {
                     VecX<double> x;
                     // rows bounded away from the origin
                     while (true) {
                       x = detail::rand_vec(rng, 8, -2, 2);
                       bool ok = true;
                       for (int r = 0; r < 2; ++r) ok = ok && x.segment(r * 4, 4).norm() > 0.5;
                       if (ok) break;
                     }
                     const VecX<double> w = detail::rand_vec(rng, 8, -1, 1);
                     return fd_max_err({{2, 4}}, {x}, [w](Tape<double>& t, const Nodes& xs) {
                       return detail::pin(t, l2_normalize(xs[0]), w);
                     });
                   }});
  cases.push_back({"cross_entropy", [](Rng& rng) {
                     std::vector<int> labels = {static_cast<int>(rng.bounded(4)), static_cast<int>(rng.bounded(4)),
                                                static_cast<int>(rng.bounded(4))};
                     return fd_max_err({{3, 4}}, {detail::rand_vec(rng, 12, -2, 2)},
                                       [labels](Tape<double>&, const Nodes& xs) {
                                         return cross_entropy(xs[0], labels);
                                       });
                   }});

  std::vector<CheckResult> results;
  for (const auto& c : cases) {
    CheckResult res;
    res.name = "grad." + c.name;
    res.tol = tol;
    for (int s = 0; s < num_seeds; ++s) {
      Rng rng(Rng::mix(base_seed, static_cast<std::uint64_t>(s) * 1000 + results.size()));
      const double e = c.run(rng);
      if (e > res.err) {
        res.err = e;
        res.detail = "worst seed " + std::to_string(s);
      }
    }
    res.pass = res.err < res.tol;
    results.push_back(std::move(res));
  }
  return results;
}

/// Full-objective gradient check on a micro encoder: every parameter of the
/// weighted four-term loss against central differences, in 64-bit.
inline CheckResult gradcheck_end_to_end(int num_seeds, std::uint64_t base_seed, double tol = 1e-4) {
  CheckResult res;
  res.name = "grad.end_to_end";
  res.tol = tol;

  for (int s = 0; s < num_seeds; ++s) {
    const std::uint64_t seed = Rng::mix(base_seed, 7777 + static_cast<std::uint64_t>(s));
    ImPstNetConfig cfg;
    cfg.spatial_subsample_rate = {2, 2};
    cfg.mlp_widths = {{6}, {8}};
    cfg.radius = {0.8, 1.6};
    cfg.k_nbr = 3;
    cfg.temporal_radius = 1;
    cfg.num_classes = 3;
    cfg.embed_dim = 5;
    ImPstNet<double> net(cfg, seed);

    // Evaluate at a generic point. At init every bias is exactly zero, which
    // parks the all-zero self-offset rows of stage 0 exactly on the ReLU
    // kink, where a central difference straddles two subgradients.
    Rng prng(Rng::mix(seed, 4242));
    for (auto& p : net.params())
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double sign = prng.uniform() < 0.5 ? -1.0 : 1.0;
        p.value(i) += sign * (0.02 + 0.08 * prng.uniform());
      }

    Rng rng(Rng::mix(seed, 99));
    const int batch = 2, T = 3, n_pts = 8;
    std::vector<Video<double>> clips;
    std::vector<int> labels;
    for (int b = 0; b < batch; ++b) {
      Video<double> v(T);
      for (int t = 0; t < T; ++t) {
        v[static_cast<std::size_t>(t)].frame_index = t;
        v[static_cast<std::size_t>(t)].coords.resize(n_pts, 3);
        for (int i = 0; i < n_pts; ++i)
          for (int d = 0; d < 3; ++d)
            v[static_cast<std::size_t>(t)].coords(i, d) = rng.uniform() * 2.0 - 1.0;
      }
      clips.push_back(std::move(v));
      labels.push_back(static_cast<int>(rng.bounded(3)));
    }
    // random unit text rows and batch-aligned video rows
    MatRow<double> text(3, 5), video(batch, 5);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 5; ++j) text(i, j) = rng.gaussian();
      text.row(i) /= text.row(i).norm();
    }
    for (int i = 0; i < batch; ++i) {
      for (int j = 0; j < 5; ++j) video(i, j) = rng.gaussian();
      video.row(i) /= video.row(i).norm();
    }
    LossWeights w;  // all four terms active

    GradTable<double> analytic;
    {
      Tape<double> tape;
      Lease<double> lease(net.params(), tape);
      std::vector<TensorNode<double>> lrows, erows;
      for (int b = 0; b < batch; ++b) {
        auto fwd = net.forward(tape, lease, clips[static_cast<std::size_t>(b)]);
        lrows.push_back(fwd.logits);
        erows.push_back(fwd.raw_embedding);
      }
      TensorNode<double> logits = concat(lrows, 0);
      TensorNode<double> pc = l2_normalize(concat(erows, 0));
      TensorNode<double> l_pc = cross_entropy(logits, labels);
      TensorNode<double> l_pv = loss_pc_video(tape, pc, video);
      TensorNode<double> l_pt = loss_pc_text(tape, pc, labels, text);
      TensorNode<double> l_rgb = cross_entropy(net.rgb_logits(lease, tape.constant_matrix(video)), labels);
      TensorNode<double> total = loss_final(w, loss_cl(w, l_pv, l_pt), l_pc, l_rgb);
      tape.backward(total);
      analytic = lease.pull_grads();
    }

    const auto eval = [&]() {
      Tape<double> tape;
      Lease<double> lease(net.params(), tape);
      std::vector<TensorNode<double>> lrows, erows;
      for (int b = 0; b < batch; ++b) {
        auto fwd = net.forward(tape, lease, clips[static_cast<std::size_t>(b)]);
        lrows.push_back(fwd.logits);
        erows.push_back(fwd.raw_embedding);
      }
      TensorNode<double> logits = concat(lrows, 0);
      TensorNode<double> pc = l2_normalize(concat(erows, 0));
      TensorNode<double> l_pc = cross_entropy(logits, labels);
      TensorNode<double> l_pv = loss_pc_video(tape, pc, video);
      TensorNode<double> l_pt = loss_pc_text(tape, pc, labels, text);
      TensorNode<double> l_rgb = cross_entropy(net.rgb_logits(lease, tape.constant_matrix(video)), labels);
      return loss_final(w, loss_cl(w, l_pv, l_pt), l_pc, l_rgb).scalar();
    };

    const double h = 1e-6;
    for (auto& p : net.params()) {
      const VecX<double>& g = analytic.at(p.name);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double keep = p.value(i);
        p.value(i) = keep + h;
        const double up = eval();
        p.value(i) = keep - h;
        const double dn = eval();
        p.value(i) = keep;
        const double e = rel_err(g(i), (up - dn) / (2 * h));
        if (e > res.err) {
          res.err = e;
          res.detail = "seed " + std::to_string(s) + " param " + p.name + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  res.pass = res.err < res.tol;
  return res;
}

// ---------------------------------------------------------------------------
// Oracle suites
// ---------------------------------------------------------------------------

inline std::vector<CheckResult> oracle_suite_geometry(int instances, std::uint64_t seed) {
  CheckResult fps_res{"oracle.fps", 0, 0, true, ""};
  CheckResult ball_res{"oracle.radius_neighbors", 0, 0, true, ""};
  CheckResult tube_res{"oracle.tube_neighbors", 0, 0, true, ""};

  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(inst)));
    const int n = 1 + static_cast<int>(rng.bounded(64));
    Cloud<float> cloud(n, 3);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d) cloud(i, d) = static_cast<float>(rng.uniform() * 2.0 - 1.0);

    const int m = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
    if (fps(cloud, m) != brute_force_fps(cloud, m)) {
      fps_res.pass = false;
      fps_res.err += 1;
      if (fps_res.detail.empty()) fps_res.detail = "instance " + std::to_string(inst);
    }

    const int k = 1 + static_cast<int>(rng.bounded(9));
    const double r = 0.05 + rng.uniform() * 1.5;
    const RowVec3<float> centroid(static_cast<float>(rng.uniform() * 2.0 - 1.0),
                                  static_cast<float>(rng.uniform() * 2.0 - 1.0),
                                  static_cast<float>(rng.uniform() * 2.0 - 1.0));
    if (radius_neighbors(centroid, cloud, r, k) != brute_force_radius(centroid, cloud, r, k)) {
      ball_res.pass = false;
      ball_res.err += 1;
      if (ball_res.detail.empty()) ball_res.detail = "instance " + std::to_string(inst);
    }

    const int T = 2 + static_cast<int>(rng.bounded(3));
    const int r_t = static_cast<int>(rng.bounded(3));
    Video<float> video(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      const int nt = 1 + static_cast<int>(rng.bounded(32));
      video[static_cast<std::size_t>(t)].frame_index = t;
      video[static_cast<std::size_t>(t)].coords.resize(nt, 3);
      for (int i = 0; i < nt; ++i)
        for (int d = 0; d < 3; ++d)
          video[static_cast<std::size_t>(t)].coords(i, d) = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    }
    const int t0 = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(T)));
    const auto got = tube_neighbors(centroid, video, t0, r, r_t, k);
    const auto want = brute_force_tube(centroid, video, t0, r, r_t, k);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].frame_offset == want[i].frame_offset && got[i].point_index == want[i].point_index;
    if (!same) {
      tube_res.pass = false;
      tube_res.err += 1;
      if (tube_res.detail.empty()) tube_res.detail = "instance " + std::to_string(inst);
    }
  }
  return {fps_res, ball_res, tube_res};
}

/// Runs the production stage in 64-bit against the nested-loop reference,
/// both with the configured toggles and with both toggles off.
inline std::vector<CheckResult> oracle_suite_conv(int instances, std::uint64_t seed, double tol = 1e-6) {
  CheckResult on_res{"oracle.im_pstconv", 0, tol, true, ""};
  CheckResult off_res{"oracle.pstconv_toggles_off", 0, tol, true, ""};

  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(Rng::mix(seed, 31337 + static_cast<std::uint64_t>(inst)));
    const int T = 2 + static_cast<int>(rng.bounded(2));
    const int n = 4 + static_cast<int>(rng.bounded(7));
    const int c_in = 2 + static_cast<int>(rng.bounded(2));
    const int width = 3 + static_cast<int>(rng.bounded(3));
    const int k = 2 + static_cast<int>(rng.bounded(2));
    const int s_s = 1 + static_cast<int>(rng.bounded(2));
    const int r_t = 1;
    const double r = 0.4 + rng.uniform() * 1.2;

    for (const bool toggles_on : {true, false}) {
      ImPstNetConfig cfg;
      cfg.spatial_subsample_rate = {1, s_s};
      cfg.mlp_widths = {{c_in}, {width}};
      cfg.radius = {r, r};
      cfg.k_nbr = k;
      cfg.temporal_radius = r_t;
      cfg.num_classes = 2;
      cfg.embed_dim = 2;
      cfg.normalize_offsets = toggles_on;
      cfg.include_center_feature = toggles_on;
      ImPstNet<double> net(cfg, Rng::mix(seed, static_cast<std::uint64_t>(inst) * 2 + toggles_on));

      Video<double> frames(static_cast<std::size_t>(T));
      std::vector<MatRow<double>> coords, feats;
      for (int t = 0; t < T; ++t) {
        frames[static_cast<std::size_t>(t)].frame_index = t;
        frames[static_cast<std::size_t>(t)].coords.resize(n, 3);
        MatRow<double> f(n, c_in);
        for (int i = 0; i < n; ++i) {
          for (int d = 0; d < 3; ++d)
            frames[static_cast<std::size_t>(t)].coords(i, d) = rng.uniform() * 2.0 - 1.0;
          for (int q = 0; q < c_in; ++q) f(i, q) = rng.uniform() * 2.0 - 1.0;
        }
        coords.emplace_back(frames[static_cast<std::size_t>(t)].coords);
        feats.push_back(std::move(f));
      }

      Tape<double> tape;
      Lease<double> lease(net.params(), tape);
      std::vector<TensorNode<double>> feat_nodes;
      for (const auto& f : feats) feat_nodes.push_back(tape.constant_matrix(f));
      StageOutput<double> in{frames, feat_nodes};
      StageOutput<double> got = net.im_pstconv(tape, lease, 1, in);

      std::vector<MatRow<double>> mlp_w;
      std::vector<VecX<double>> mlp_b;
      const auto& pw = net.params().at("stage1.mlp0.weight");
      const auto& pb = net.params().at("stage1.mlp0.bias");
      mlp_w.push_back(Eigen::Map<const MatRow<double>>(pw.value.data(), pw.shape[0], pw.shape[1]));
      mlp_b.push_back(pb.value);

      RefStageConfig rc{s_s, r, r_t, k, toggles_on, toggles_on};
      const std::vector<MatRow<double>> want = reference_stage(coords, feats, mlp_w, mlp_b, rc);

      CheckResult& res = toggles_on ? on_res : off_res;
      for (int t = 0; t < T; ++t) {
        const auto gv = got.feats[static_cast<std::size_t>(t)].values();
        const MatRow<double>& wm = want[static_cast<std::size_t>(t)];
        if (gv.size() != wm.size()) {
          res.pass = false;
          res.detail = "shape mismatch at instance " + std::to_string(inst);
          continue;
        }
        for (Eigen::Index i = 0; i < wm.rows(); ++i)
          for (Eigen::Index j = 0; j < wm.cols(); ++j) {
            const double e = std::abs(gv(i * wm.cols() + j) - wm(i, j));
            if (e > res.err) {
              res.err = e;
              res.detail = "instance " + std::to_string(inst);
            }
          }
      }
    }
  }
  on_res.pass = on_res.pass && on_res.err <= tol;
  off_res.pass = off_res.pass && off_res.err <= tol;
  return {on_res, off_res};
}

/// Loss identities: zero at batch size 1, uniform-similarity values ln K and
/// ln N, and the unit-vector lower bound over random batches.
inline std::vector<CheckResult> loss_identity_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;

  {  // batch of one: numerator equals denominator
    CheckResult r{"loss.pc_video_n1", 0, 0, true, ""};
    Tape<float> tape;
    Rng rng(Rng::mix(seed, 1));
    MatRow<float> v(1, 4);
    for (int j = 0; j < 4; ++j) v(0, j) = static_cast<float>(rng.gaussian());
    v.row(0) /= v.row(0).norm();
    TensorNode<float> pc = l2_normalize(tape.constant_matrix(v));
    r.err = std::abs(static_cast<double>(loss_pc_video(tape, pc, v).scalar()));
    r.pass = r.err == 0.0;
    out.push_back(r);
  }

  {  // orthogonal embedding: all class similarities zero, loss = ln K
    CheckResult r{"loss.pc_text_uniform_lnK", 0, 1e-6, true, ""};
    const int K = 8, C = K + 1;
    Tape<float> tape;
    MatRow<float> text = MatRow<float>::Zero(K, C);
    for (int i = 0; i < K; ++i) text(i, i) = 1.0f;
    MatRow<float> pc = MatRow<float>::Zero(1, C);
    pc(0, K) = 1.0f;
    const double got = static_cast<double>(
        loss_pc_text(tape, tape.constant_matrix(pc), std::vector<int>{3}, text).scalar());
    r.err = std::abs(got - std::log(static_cast<double>(K)));
    r.pass = r.err <= r.tol;
    out.push_back(r);
  }

  {  // identical rows: uniform batch softmax, loss = ln N
    CheckResult r{"loss.pc_video_uniform_lnN", 0, 1e-6, true, ""};
    const int N = 4, C = 6;
    Tape<float> tape;
    Rng rng(Rng::mix(seed, 2));
    MatRow<float> row(1, C);
    for (int j = 0; j < C; ++j) row(0, j) = static_cast<float>(rng.gaussian());
    row.row(0) /= row.row(0).norm();
    MatRow<float> v(N, C);
    for (int i = 0; i < N; ++i) v.row(i) = row.row(0);
    const double got =
        static_cast<double>(loss_pc_video(tape, tape.constant_matrix(v), v).scalar());
    r.err = std::abs(got - std::log(static_cast<double>(N)));
    r.pass = r.err <= r.tol;
    out.push_back(r);
  }

  {  // similarity of unit vectors lies in [-1,1], so the loss is bounded below
    CheckResult r{"loss.pc_text_lower_bound", 0, 0, true, ""};
    const int K = 60, N = 16, C = 32, batches = 1000;
    const double bound = std::log(1.0 + (K - 1) * std::exp(-2.0));
    Rng rng(Rng::mix(seed, 3));
    double worst_margin = std::numeric_limits<double>::infinity();
    for (int b = 0; b < batches; ++b) {
      MatRow<float> text(K, C), pc(N, C);
      for (int i = 0; i < K; ++i) {
        for (int j = 0; j < C; ++j) text(i, j) = static_cast<float>(rng.gaussian());
        text.row(i) /= text.row(i).norm();
      }
      std::vector<int> labels(N);
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < C; ++j) pc(i, j) = static_cast<float>(rng.gaussian());
        pc.row(i) /= pc.row(i).norm();
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.bounded(K));
      }
      Tape<float> tape;
      const double got =
          static_cast<double>(loss_pc_text(tape, tape.constant_matrix(pc), labels, text).scalar());
      worst_margin = std::min(worst_margin, got - bound);
      if (got < bound) {
        r.pass = false;
        r.err = bound - got;
        if (r.detail.empty()) r.detail = "batch " + std::to_string(b);
      }
    }
    if (r.detail.empty()) r.detail = "min margin " + std::to_string(worst_margin);
    out.push_back(r);
  }
  return out;
}

/// Nearest-motion-model classifier over per-frame centroid trajectories;
/// guards the synthetic generator's separability.
template <typename Scalar>
double synthetic_separability(const std::vector<PointCloudVideo<Scalar>>& samples) {
  if (samples.empty()) throw ArgumentError("synthetic_separability: empty dataset");
  int correct = 0;
  for (const auto& s : samples) {
    const int T = static_cast<int>(s.frames.size());
    std::vector<RowVec3<double>> cents(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      RowVec3<double> c = RowVec3<double>::Zero();
      const auto& fr = s.frames[static_cast<std::size_t>(t)].coords;
      for (Eigen::Index i = 0; i < fr.rows(); ++i) c += fr.row(i).template cast<double>();
      cents[static_cast<std::size_t>(t)] = c / static_cast<double>(fr.rows());
    }
    int best_cls = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (int cls = 0; cls < kMotionBankSize; ++cls) {
      double err = 0;
      for (int t = 0; t < T; ++t) {
        const RowVec3<double> pred = apply_motion<double>(cls, t, cents[0]);
        err += (cents[static_cast<std::size_t>(t)] - pred).squaredNorm();
      }
      if (err < best_err) {
        best_err = err;
        best_cls = cls;
      }
    }
    if (best_cls == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace vg4d::selfcheck
