// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmt/random.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  void zero_grad() { grad = Tensor(value.shape()); }

  std::string name;
  Tensor value;
  Tensor grad;
};

enum class Mode { kTrain, kEval };

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of one forward pass. Rebuilt for every step.
///
/// A non-recording tape evaluates the same programs without keeping backward
/// closures, which is what decoding uses.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  /// Leaf bound to `p`. Repeated calls with the same parameter return the same node.
  Var parameter(Parameter& p);

  /// Appends a computed node. `backward(tape, id)` reads grad(id) and accumulates
  /// into the inputs through grad_buffer().
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient of node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);
  const Tensor& grad(std::size_t id) { return grad_buffer(id); }

  /// Reverse sweep from a scalar loss. Parameter gradients are added into
  /// Parameter::grad.
  void backward(Var loss);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Linear algebra and elementwise operations. Shapes must match exactly; the
// only broadcast is add_bias.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// x[B x n] + bias, with bias of shape [n] or [1 x n] repeated over rows.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
/// 1 - x.
Var one_minus(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var log(Var x);
/// Concatenation of matrices along axis 1 (columns) or axis 0 (rows).
Var concat(std::span<const Var> parts, std::size_t axis = 1);
Var concat(std::initializer_list<Var> parts, std::size_t axis = 1);
/// Column j of a matrix as [rows x 1].
Var column(Var x, std::size_t j);
/// Row i of x scaled by w[i]; w has shape [rows x 1].
Var scale_rows(Var x, Var w);
/// Stable softmax along `axis` of a vector or matrix.
Var softmax(Var x, std::size_t axis);
/// Row-wise softmax restricted to entries where mask is 1; masked entries are 0.
Var masked_softmax(Var x, const Tensor& mask);
/// Rows of `table` selected by `ids`, shape [ids.size() x table.cols].
Var gather_rows(Var table, std::span<const int> ids);
Var sum(Var x);
/// Mean of -log p[t, target_t] over positions with mask_t != 0.
Var cross_entropy(Var probs, std::span<const int> targets, std::span<const double> mask);
/// Inverted dropout. Identity in evaluation mode or at rate 0.
Var dropout(Var x, double rate, Mode mode, Rng& rng);

}  // namespace mmt
