// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode tape over dense row-major tensors. Templated on the
// scalar so the same graph code runs in float for training and in double for
// finite-difference validation.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "vg4d/common.hpp"

namespace vg4d {

inline constexpr double kNormalizeEpsilon = 1e-12;

template <typename Scalar>
class Tape;

/// Handle to one value on a tape. Cheap to copy; the tape owns the storage.
template <typename Scalar>
class TensorNode {
 public:
  TensorNode() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }

  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  Eigen::Index dim(int axis) const { return shape()[static_cast<std::size_t>(axis)]; }
  Eigen::Index size() const { return numel(shape()); }
  bool requires_grad() const;

  Eigen::Map<const VecX<Scalar>> values() const;
  /// Gradient of the last backward pass; defined for every node that
  /// requires gradients.
  Eigen::Map<const VecX<Scalar>> gradient() const;

  Scalar scalar() const {
    if (size() != 1) throw DimensionError("scalar: node has shape " + shape_str(shape()));
    return values()(0);
  }

 private:
  friend class Tape<Scalar>;
  TensorNode(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  struct Record {
    Shape shape;
    VecX<Scalar> values;
    VecX<Scalar> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  TensorNode<Scalar> leaf(const Shape& shape, const Scalar* data, bool requires_grad) {
    const Eigen::Index n = numel(shape);
    if (n <= 0) throw DimensionError("leaf: shape " + shape_str(shape) + " has no elements");
    TensorNode<Scalar> node = make(shape, requires_grad);
    at(node.id()).values = Eigen::Map<const VecX<Scalar>>(data, n);
    return node;
  }

  TensorNode<Scalar> leaf(const Shape& shape, const VecX<Scalar>& data, bool requires_grad) {
    if (data.size() != numel(shape))
      throw DimensionError("leaf: " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
    return leaf(shape, data.data(), requires_grad);
  }

  TensorNode<Scalar> constant(const Shape& shape, const Scalar* data) { return leaf(shape, data, false); }

  TensorNode<Scalar> constant_matrix(const MatRow<Scalar>& m) {
    return leaf({m.rows(), m.cols()}, m.data(), false);
  }

  TensorNode<Scalar> scalar_constant(Scalar v) { return leaf(Shape{1}, &v, false); }

  /// Allocates an uninitialized node; op builders fill values and backward.
  TensorNode<Scalar> make(Shape shape, bool requires_grad) {
    Record rec;
    rec.shape = std::move(shape);
    rec.values.resize(numel(rec.shape));
    rec.requires_grad = requires_grad;
    records_.push_back(std::move(rec));
    return TensorNode<Scalar>(this, static_cast<int>(records_.size()) - 1);
  }

  Record& at(int id) { return records_[static_cast<std::size_t>(id)]; }
  const Record& at(int id) const { return records_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return records_.size(); }

  VecX<Scalar>& grad_buf(int id) { return records_[static_cast<std::size_t>(id)].grad; }

  /// Reverse pass from a scalar root. Gradients of all nodes that require
  /// them are (re)initialized to zero first, so they are defined afterwards
  /// even when a node never receives an adjoint.
  void backward(const TensorNode<Scalar>& root) {
    if (root.tape() != this) throw ArgumentError("backward: node belongs to another tape");
    if (root.size() != 1)
      throw DimensionError("backward: root must be scalar, got " + shape_str(root.shape()));
    for (Record& rec : records_) {
      if (rec.requires_grad) rec.grad = VecX<Scalar>::Zero(rec.values.size());
    }
    Record& rootrec = at(root.id());
    if (!rootrec.requires_grad) return;  // no trainable inputs anywhere upstream
    rootrec.grad(0) = Scalar(1);
    for (int id = root.id(); id >= 0; --id) {
      Record& rec = at(id);
      if (rec.requires_grad && rec.backward) rec.backward();
    }
  }

 private:
  std::vector<Record> records_;
};

template <typename Scalar>
inline const Shape& TensorNode<Scalar>::shape() const {
  return tape_->at(id_).shape;
}

template <typename Scalar>
inline bool TensorNode<Scalar>::requires_grad() const {
  return tape_->at(id_).requires_grad;
}

template <typename Scalar>
inline Eigen::Map<const VecX<Scalar>> TensorNode<Scalar>::values() const {
  const auto& rec = tape_->at(id_);
  return Eigen::Map<const VecX<Scalar>>(rec.values.data(), rec.values.size());
}

template <typename Scalar>
inline Eigen::Map<const VecX<Scalar>> TensorNode<Scalar>::gradient() const {
  const auto& rec = tape_->at(id_);
  if (rec.grad.size() != rec.values.size())
    throw ArgumentError("gradient: no backward pass has populated this node");
  return Eigen::Map<const VecX<Scalar>>(rec.grad.data(), rec.grad.size());
}

// ---------------------------------------------------------------------------
// Op helpers
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Tape<Scalar>* same_tape(const TensorNode<Scalar>& a, const TensorNode<Scalar>& b) {
  if (!a.valid() || !b.valid()) throw ArgumentError("op: uninitialized tensor node");
  if (a.tape() != b.tape()) throw ArgumentError("op: nodes belong to different tapes");
  return a.tape();
}

template <typename Scalar>
Eigen::Map<const MatRow<Scalar>> mat(const Tape<Scalar>& tape, int id, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<const MatRow<Scalar>>(tape.at(id).values.data(), r, c);
}

template <typename Scalar>
Eigen::Map<MatRow<Scalar>> mat_grad(Tape<Scalar>& tape, int id, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<MatRow<Scalar>>(tape.grad_buf(id).data(), r, c);
}

template <typename Scalar>
Eigen::Map<const MatRow<Scalar>> mat_grad_c(const Tape<Scalar>& tape, int id, Eigen::Index r,
                                            Eigen::Index c) {
  return Eigen::Map<const MatRow<Scalar>>(tape.at(id).grad.data(), r, c);
}

inline void check_axis(int axis, int rank, const char* op) {
  if (axis < 0 || axis >= rank)
    throw ArgumentError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " +
                        std::to_string(rank));
}

/// Sizes of the loop nest around `axis`: product of dims before, the axis
/// extent, and product of dims after.
inline void axis_split(const Shape& s, int axis, Eigen::Index& outer, Eigen::Index& len, Eigen::Index& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  len = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core differentiable ops
// ---------------------------------------------------------------------------

template <typename Scalar>
TensorNode<Scalar> matmul(const TensorNode<Scalar>& a, const TensorNode<Scalar>& b) {
  Tape<Scalar>* tp = detail::same_tape(a, b);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const Eigen::Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorNode<Scalar> out = tp->make({m, n}, a.requires_grad() || b.requires_grad());
  Eigen::Map<MatRow<Scalar>>(tp->at(out.id()).values.data(), m, n).noalias() =
      detail::mat(*tp, a.id(), m, k) * detail::mat(*tp, b.id(), k, n);
  if (out.requires_grad()) {
    const int aid = a.id(), bid = b.id(), oid = out.id();
    tp->at(oid).backward = [tp, aid, bid, oid, m, k, n]() {
      auto g = detail::mat_grad_c(*tp, oid, m, n);
      if (tp->at(aid).requires_grad)
        detail::mat_grad(*tp, aid, m, k).noalias() += g * detail::mat(*tp, bid, k, n).transpose();
      if (tp->at(bid).requires_grad)
        detail::mat_grad(*tp, bid, k, n).noalias() += detail::mat(*tp, aid, m, k).transpose() * g;
    };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> add(const TensorNode<Scalar>& a, const TensorNode<Scalar>& b) {
  Tape<Scalar>* tp = detail::same_tape(a, b);
  if (a.shape() != b.shape())
    throw DimensionError("add: mismatched shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  TensorNode<Scalar> out = tp->make(a.shape(), a.requires_grad() || b.requires_grad());
  tp->at(out.id()).values = tp->at(a.id()).values + tp->at(b.id()).values;
  if (out.requires_grad()) {
    const int aid = a.id(), bid = b.id(), oid = out.id();
    tp->at(oid).backward = [tp, aid, bid, oid]() {
      const VecX<Scalar>& g = tp->at(oid).grad;
      if (tp->at(aid).requires_grad) tp->grad_buf(aid) += g;
      if (tp->at(bid).requires_grad) tp->grad_buf(bid) += g;
    };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> scale(const TensorNode<Scalar>& x, double c) {
  Tape<Scalar>* tp = x.tape();
  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad());
  tp->at(out.id()).values = tp->at(x.id()).values * Scalar(c);
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid, c]() { tp->grad_buf(xid) += tp->at(oid).grad * Scalar(c); };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> relu(const TensorNode<Scalar>& x) {
  Tape<Scalar>* tp = x.tape();
  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad());
  tp->at(out.id()).values = tp->at(x.id()).values.cwiseMax(Scalar(0));
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid]() {
      tp->grad_buf(xid).array() +=
          (tp->at(xid).values.array() > Scalar(0)).template cast<Scalar>() * tp->at(oid).grad.array();
    };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> log(const TensorNode<Scalar>& x) {
  Tape<Scalar>* tp = x.tape();
  if ((tp->at(x.id()).values.array() <= Scalar(0)).any())
    throw DegenerateInputError("log: input has non-positive entries");
  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad());
  tp->at(out.id()).values = tp->at(x.id()).values.array().log();
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid]() {
      tp->grad_buf(xid).array() += tp->at(oid).grad.array() / tp->at(xid).values.array();
    };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> exp(const TensorNode<Scalar>& x) {
  Tape<Scalar>* tp = x.tape();
  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad());
  tp->at(out.id()).values = tp->at(x.id()).values.array().exp();
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid]() {
      tp->grad_buf(xid).array() += tp->at(oid).grad.array() * tp->at(oid).values.array();
    };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> sum(const TensorNode<Scalar>& x) {
  Tape<Scalar>* tp = x.tape();
  TensorNode<Scalar> out = tp->make(Shape{1}, x.requires_grad());
  tp->at(out.id()).values(0) = tp->at(x.id()).values.sum();
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid]() {
      tp->grad_buf(xid).array() += tp->at(oid).grad(0);
    };
  }
  return out;
}

/// Adds a length-o bias row to every row of an n-by-o matrix.
template <typename Scalar>
TensorNode<Scalar> add_bias(const TensorNode<Scalar>& x, const TensorNode<Scalar>& b) {
  Tape<Scalar>* tp = detail::same_tape(x, b);
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
    throw DimensionError("add_bias: shapes " + shape_str(x.shape()) + " and " + shape_str(b.shape()));
  const Eigen::Index n = x.dim(0), o = x.dim(1);
  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad() || b.requires_grad());
  Eigen::Map<MatRow<Scalar>>(tp->at(out.id()).values.data(), n, o) =
      detail::mat(*tp, x.id(), n, o).rowwise() +
      Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(tp->at(b.id()).values.data(), o);
  if (out.requires_grad()) {
    const int xid = x.id(), bid = b.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, bid, oid, n, o]() {
      auto g = detail::mat_grad_c(*tp, oid, n, o);
      if (tp->at(xid).requires_grad) detail::mat_grad(*tp, xid, n, o) += g;
      if (tp->at(bid).requires_grad)
        Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(tp->grad_buf(bid).data(), o) +=
            g.colwise().sum();
    };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> linear(const TensorNode<Scalar>& x, const TensorNode<Scalar>& w,
                          const TensorNode<Scalar>& b) {
  return add_bias(matmul(x, w), b);
}

template <typename Scalar>
TensorNode<Scalar> reshape(const TensorNode<Scalar>& x, Shape shape) {
  Tape<Scalar>* tp = x.tape();
  if (numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  TensorNode<Scalar> out = tp->make(std::move(shape), x.requires_grad());
  tp->at(out.id()).values = tp->at(x.id()).values;
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid]() { tp->grad_buf(xid) += tp->at(oid).grad; };
  }
  return out;
}

template <typename Scalar>
TensorNode<Scalar> concat(const std::vector<TensorNode<Scalar>>& xs, int axis) {
  if (xs.empty()) throw ArgumentError("concat: empty input list");
  Tape<Scalar>* tp = xs.front().tape();
  const Shape& first = xs.front().shape();
  detail::check_axis(axis, static_cast<int>(first.size()), "concat");
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  bool needs_grad = false;
  for (const auto& x : xs) {
    if (x.tape() != tp) throw ArgumentError("concat: nodes belong to different tapes");
    if (x.rank() != static_cast<int>(first.size()))
      throw DimensionError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(x.shape()));
    for (int d = 0; d < x.rank(); ++d) {
      if (d != axis && x.dim(d) != first[static_cast<std::size_t>(d)])
        throw DimensionError("concat: shapes " + shape_str(first) + " and " + shape_str(x.shape()) +
                             " differ off axis " + std::to_string(axis));
    }
    out_shape[static_cast<std::size_t>(axis)] += x.dim(axis);
    needs_grad = needs_grad || x.requires_grad();
  }

  Eigen::Index outer, out_len, inner;
  detail::axis_split(out_shape, axis, outer, out_len, inner);
  TensorNode<Scalar> out = tp->make(out_shape, needs_grad);

  std::vector<int> ids(xs.size());
  std::vector<Eigen::Index> lens(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ids[i] = xs[i].id();
    lens[i] = xs[i].dim(axis);
  }

  VecX<Scalar>& ov = tp->at(out.id()).values;
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Eigen::Index block = lens[i] * inner;
      ov.segment(o * out_len * inner + pos, block) = tp->at(ids[i]).values.segment(o * block, block);
      pos += block;
    }
  }

  if (needs_grad) {
    const int oid = out.id();
    tp->at(oid).backward = [tp, oid, ids, lens, outer, out_len, inner]() {
      const VecX<Scalar>& g = tp->at(oid).grad;
      for (Eigen::Index o = 0; o < outer; ++o) {
        Eigen::Index pos = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const Eigen::Index block = lens[i] * inner;
          if (tp->at(ids[i]).requires_grad)
            tp->grad_buf(ids[i]).segment(o * block, block) += g.segment(o * out_len * inner + pos, block);
          pos += block;
        }
      }
    };
  }
  return out;
}

/// Row gather: out row i is x row idx[i]. Repeated indices are allowed and
/// accumulate in the backward scatter.
template <typename Scalar>
TensorNode<Scalar> gather_rows(const TensorNode<Scalar>& x, const std::vector<int>& idx) {
  Tape<Scalar>* tp = x.tape();
  if (x.rank() != 2) throw DimensionError("gather_rows: expected matrix, got " + shape_str(x.shape()));
  const Eigen::Index n = x.dim(0), c = x.dim(1);
  for (int i : idx) {
    if (i < 0 || i >= n)
      throw ArgumentError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                          std::to_string(n) + ")");
  }
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  TensorNode<Scalar> out = tp->make({m, c}, x.requires_grad());
  auto src = detail::mat(*tp, x.id(), n, c);
  Eigen::Map<MatRow<Scalar>> dst(tp->at(out.id()).values.data(), m, c);
  for (Eigen::Index i = 0; i < m; ++i) dst.row(i) = src.row(idx[static_cast<std::size_t>(i)]);
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid, idx, n, c, m]() {
      auto g = detail::mat_grad_c(*tp, oid, m, c);
      auto gx = detail::mat_grad(*tp, xid, n, c);
      for (Eigen::Index i = 0; i < m; ++i) gx.row(idx[static_cast<std::size_t>(i)]) += g.row(i);
    };
  }
  return out;
}

template <typename Scalar>
struct MaxReduceResult {
  TensorNode<Scalar> values;
  /// Flat winner positions along the reduced axis, one per output element.
  std::shared_ptr<std::vector<Eigen::Index>> argmax;
};

/// Max over one axis; ties resolve to the lowest index so the backward route
/// is deterministic. Gradient flows only to the winning positions.
template <typename Scalar>
MaxReduceResult<Scalar> max_reduce(const TensorNode<Scalar>& x, int axis) {
  Tape<Scalar>* tp = x.tape();
  detail::check_axis(axis, x.rank(), "max_reduce");
  Eigen::Index outer, len, inner;
  detail::axis_split(x.shape(), axis, outer, len, inner);

  Shape out_shape;
  for (int d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.dim(d));
  if (out_shape.empty()) out_shape.push_back(1);

  TensorNode<Scalar> out = tp->make(out_shape, x.requires_grad());
  auto arg = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(outer * inner));

  const VecX<Scalar>& xv = tp->at(x.id()).values;
  VecX<Scalar>& ov = tp->at(out.id()).values;
  for (Eigen::Index o = 0; o < outer; ++o) {
    for (Eigen::Index i = 0; i < inner; ++i) {
      Scalar best = xv(o * len * inner + i);
      Eigen::Index best_l = 0;
      for (Eigen::Index l = 1; l < len; ++l) {
        const Scalar v = xv((o * len + l) * inner + i);
        if (v > best) {
          best = v;
          best_l = l;
        }
      }
      ov(o * inner + i) = best;
      (*arg)[static_cast<std::size_t>(o * inner + i)] = best_l;
    }
  }

  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid, arg, outer, len, inner]() {
      const VecX<Scalar>& g = tp->at(oid).grad;
      VecX<Scalar>& gx = tp->grad_buf(xid);
      for (Eigen::Index o = 0; o < outer; ++o)
        for (Eigen::Index i = 0; i < inner; ++i) {
          const Eigen::Index l = (*arg)[static_cast<std::size_t>(o * inner + i)];
          gx((o * len + l) * inner + i) += g(o * inner + i);
        }
    };
  }
  return {out, arg};
}

template <typename Scalar>
TensorNode<Scalar> softmax(const TensorNode<Scalar>& x, int axis) {
  Tape<Scalar>* tp = x.tape();
  detail::check_axis(axis, x.rank(), "softmax");
  Eigen::Index outer, len, inner;
  detail::axis_split(x.shape(), axis, outer, len, inner);

  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad());
  const VecX<Scalar>& xv = tp->at(x.id()).values;
  VecX<Scalar>& ov = tp->at(out.id()).values;
  for (Eigen::Index o = 0; o < outer; ++o) {
    for (Eigen::Index i = 0; i < inner; ++i) {
      Scalar m = xv(o * len * inner + i);
      for (Eigen::Index l = 1; l < len; ++l) m = std::max(m, xv((o * len + l) * inner + i));
      Scalar denom = Scalar(0);
      for (Eigen::Index l = 0; l < len; ++l) {
        const Scalar e = std::exp(xv((o * len + l) * inner + i) - m);
        ov((o * len + l) * inner + i) = e;
        denom += e;
      }
      for (Eigen::Index l = 0; l < len; ++l) ov((o * len + l) * inner + i) /= denom;
    }
  }

  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid, outer, len, inner]() {
      const VecX<Scalar>& g = tp->at(oid).grad;
      const VecX<Scalar>& y = tp->at(oid).values;
      VecX<Scalar>& gx = tp->grad_buf(xid);
      for (Eigen::Index o = 0; o < outer; ++o)
        for (Eigen::Index i = 0; i < inner; ++i) {
          Scalar dot = Scalar(0);
          for (Eigen::Index l = 0; l < len; ++l) {
            const Eigen::Index p = (o * len + l) * inner + i;
            dot += g(p) * y(p);
          }
          for (Eigen::Index l = 0; l < len; ++l) {
            const Eigen::Index p = (o * len + l) * inner + i;
            gx(p) += y(p) * (g(p) - dot);
          }
        }
    };
  }
  return out;
}

/// Normalizes each row of an n-by-C matrix to unit Euclidean norm.
template <typename Scalar>
TensorNode<Scalar> l2_normalize(const TensorNode<Scalar>& x) {
  Tape<Scalar>* tp = x.tape();
  if (x.rank() != 2) throw DimensionError("l2_normalize: expected matrix, got " + shape_str(x.shape()));
  const Eigen::Index n = x.dim(0), c = x.dim(1);
  auto norms = std::make_shared<VecX<Scalar>>(n);
  auto xm = detail::mat(*tp, x.id(), n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar nrm = xm.row(i).norm();
    if (!(nrm > Scalar(kNormalizeEpsilon)))
      throw DegenerateInputError("l2_normalize: row " + std::to_string(i) + " has norm below " +
                                 std::to_string(kNormalizeEpsilon));
    (*norms)(i) = nrm;
  }
  TensorNode<Scalar> out = tp->make(x.shape(), x.requires_grad());
  Eigen::Map<MatRow<Scalar>> om(tp->at(out.id()).values.data(), n, c);
  for (Eigen::Index i = 0; i < n; ++i) om.row(i) = xm.row(i) / (*norms)(i);
  if (out.requires_grad()) {
    const int xid = x.id(), oid = out.id();
    tp->at(oid).backward = [tp, xid, oid, norms, n, c]() {
      auto gx = detail::mat_grad(*tp, xid, n, c);
      const auto g = Eigen::Map<const MatRow<Scalar>>(tp->at(oid).grad.data(), n, c);
      const auto y = Eigen::Map<const MatRow<Scalar>>(tp->at(oid).values.data(), n, c);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar dot = g.row(i).dot(y.row(i));
        gx.row(i) += (g.row(i) - y.row(i) * dot) / (*norms)(i);
      }
    };
  }
  return out;
}

/// Mean softmax cross-entropy of row-wise logits against integer labels.
template <typename Scalar>
TensorNode<Scalar> cross_entropy(const TensorNode<Scalar>& logits, const std::vector<int>& labels) {
  Tape<Scalar>* tp = logits.tape();
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy: expected matrix, got " + shape_str(logits.shape()));
  const Eigen::Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  for (int y : labels) {
    if (y < 0 || y >= k)
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                          std::to_string(k) + ")");
  }
  auto probs = std::make_shared<MatRow<Scalar>>(n, k);
  auto z = detail::mat(*tp, logits.id(), n, k);
  Scalar total = Scalar(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar m = z.row(i).maxCoeff();
    probs->row(i) = (z.row(i).array() - m).exp();
    const Scalar denom = probs->row(i).sum();
    probs->row(i) /= denom;
    total += (m + std::log(denom)) - z(i, labels[static_cast<std::size_t>(i)]);
  }
  TensorNode<Scalar> out = tp->make(Shape{1}, logits.requires_grad());
  tp->at(out.id()).values(0) = total / Scalar(n);
  if (out.requires_grad()) {
    const int zid = logits.id(), oid = out.id();
    tp->at(oid).backward = [tp, zid, oid, probs, labels, n, k]() {
      const Scalar g = tp->at(oid).grad(0) / Scalar(n);
      auto gz = detail::mat_grad(*tp, zid, n, k);
      for (Eigen::Index i = 0; i < n; ++i) {
        gz.row(i) += g * probs->row(i);
        gz(i, labels[static_cast<std::size_t>(i)]) -= g;
      }
    };
  }
  return out;
}

template <typename Scalar>
bool all_finite(const TensorNode<Scalar>& x) {
  return x.values().allFinite();
}

}  // namespace vg4d
