// SPDX-License-Identifier: Apache-2.0
//
// Named trainable parameters, the SGD update, and the per-step lease of
// parameters onto a tape.
#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vg4d/checkpoint.hpp"
#include "vg4d/common.hpp"
#include "vg4d/tensor.hpp"

namespace vg4d {

template <typename Scalar>
struct Parameter {
  std::string name;
  Shape shape;
  VecX<Scalar> value;
  VecX<Scalar> momentum;  // empty until the first SGD step touches it
  bool weight_decay_exempt = false;
};

/// Insertion-ordered, name-unique collection. Deque keeps references stable
/// across add() so leases may hold Parameter pointers.
template <typename Scalar>
class ParameterSet {
 public:
  Parameter<Scalar>& add(std::string name, Shape shape, bool weight_decay_exempt = false) {
    if (index_.count(name)) throw ArgumentError("parameter '" + name + "' already registered");
    Parameter<Scalar> p;
    p.name = name;
    p.shape = std::move(shape);
    p.value = VecX<Scalar>::Zero(numel(p.shape));
    p.weight_decay_exempt = weight_decay_exempt;
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return params_.back();
  }

  Parameter<Scalar>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter<Scalar>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::vector<RawTensor> to_raw() const {
    std::vector<RawTensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) {
      RawTensor t;
      t.name = p.name;
      t.shape = p.shape;
      t.data.resize(static_cast<std::size_t>(p.value.size()));
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        t.data[static_cast<std::size_t>(i)] = static_cast<float>(p.value(i));
      out.push_back(std::move(t));
    }
    return out;
  }

  /// Strict assignment: the checkpoint must contain exactly this set's names
  /// with matching shapes. Momentum buffers reset.
  void from_raw(const std::vector<RawTensor>& tensors) {
    std::unordered_map<std::string, const RawTensor*> by_name;
    for (const auto& t : tensors) {
      if (!by_name.emplace(t.name, &t).second)
        throw FormatError("checkpoint has duplicate tensor '" + t.name + "'");
    }
    if (by_name.size() != params_.size()) {
      for (const auto& t : tensors)
        if (!contains(t.name)) throw FormatError("checkpoint has unexpected tensor '" + t.name + "'");
    }
    for (auto& p : params_) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + p.name + "'");
      const RawTensor& t = *it->second;
      if (t.shape != p.shape)
        throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_str(t.shape) +
                          ", expected " + shape_str(p.shape));
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value(i) = static_cast<Scalar>(t.data[static_cast<std::size_t>(i)]);
      p.momentum.resize(0);
    }
  }

  void save(const std::string& path) const { write_checkpoint(path, to_raw()); }
  void load(const std::string& path) { from_raw(read_checkpoint(path)); }

 private:
  std::deque<Parameter<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
using GradTable = std::unordered_map<std::string, VecX<Scalar>>;

/// All parameters of a set placed on one tape as gradient-carrying leaves.
/// Every parameter is leased on every forward pass, so after backward each
/// one has a defined (possibly zero) gradient.
template <typename Scalar>
class Lease {
 public:
  Lease(ParameterSet<Scalar>& params, Tape<Scalar>& tape) {
    for (auto& p : params) {
      entries_.emplace_back(&p, tape.leaf(p.shape, p.value, /*requires_grad=*/true));
    }
  }

  TensorNode<Scalar> node(const std::string& name) const {
    for (const auto& [p, n] : entries_)
      if (p->name == name) return n;
    throw ArgumentError("lease: parameter '" + name + "' not leased");
  }

  GradTable<Scalar> pull_grads() const {
    GradTable<Scalar> out;
    for (const auto& [p, n] : entries_) out.emplace(p->name, n.gradient());
    return out;
  }

  const std::vector<std::pair<Parameter<Scalar>*, TensorNode<Scalar>>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<Parameter<Scalar>*, TensorNode<Scalar>>> entries_;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Momentum SGD. Per parameter: g = grad (+ wd*p unless exempt);
/// buf = momentum*buf + g (first step buf = g); p -= lr*buf.
template <typename Scalar>
void sgd_step(ParameterSet<Scalar>& params, const GradTable<Scalar>& grads, const SgdConfig& cfg) {
  for (auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) throw ArgumentError("sgd_step: no gradient supplied for parameter '" + p.name + "'");
    const VecX<Scalar>& grad = it->second;
    if (grad.size() != p.value.size())
      throw DimensionError("sgd_step: gradient size mismatch for parameter '" + p.name + "'");
    VecX<Scalar> g = grad;
    if (cfg.weight_decay != 0.0 && !p.weight_decay_exempt) g += Scalar(cfg.weight_decay) * p.value;
    if (cfg.momentum != 0.0) {
      if (p.momentum.size() == 0) {
        p.momentum = g;
      } else {
        p.momentum = Scalar(cfg.momentum) * p.momentum + g;
      }
      g = p.momentum;
    }
    p.value -= Scalar(cfg.lr) * g;
  }
}

}  // namespace vg4d
