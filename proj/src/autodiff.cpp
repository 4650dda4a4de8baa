// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmt {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  return push(std::move(node));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.external = &p.value;
  node.param = &p;
  node.needs_grad = recording_;
  Var v = push(std::move(node));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  if (recording_) {
    for (const Var& in : inputs) {
      if (&in.tape() != this) throw std::logic_error("operands recorded on different tapes");
      node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
  }
  return push(std::move(node));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (&loss.tape() != this) throw std::logic_error("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || !n.has_grad) continue;
    Parameter& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    auto dst = p.grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                              shape_string(b));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

// C[m x n] += A[m x k] * B[k x n] with optional transposes expressed through strides.
void gemm_acc(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c) {
  const std::size_t m = c.rows(), n = c.cols();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t a_cols = a.cols(), b_cols = b.cols();
  auto A = a.data();
  auto B = b.data();
  auto C = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? A[p * a_cols + i] : A[i * a_cols + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = &B[p * b_cols];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * B[j * b_cols + p];
      }
    }
  }
}

template <typename F>
Tensor map(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_error("matmul", av.shape(), bv.shape());
  Tensor out({av.rows(), bv.cols()});
  gemm_acc(av, false, bv, false, out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) gemm_acc(g, false, t.value(ib), true, t.grad_buffer(ia));
    if (t.needs_grad(ib)) gemm_acc(t.value(ia), true, g, false, t.grad_buffer(ib));
  });
}

Var transpose(Var a) {
  Tensor out = transposed(a.value());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    accumulate(t.grad_buffer(ia), transposed(t.grad(self)));
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var binary(const char* name, Var a, Var b, Fwd fwd, Bwd bwd) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_error(name, av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, bwd](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    const bool da = t.needs_grad(ia), db = t.needs_grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto [ga, gb] = bwd(x[i], y[i], g[i]);
      if (da) t.grad_buffer(ia)[i] += ga;
      if (db) t.grad_buffer(ib)[i] += gb;
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.rows() != 1 || bv.rank() == 0 || bv.cols() != xv.cols()) {
    shape_error("add_bias", xv.shape(), bv.shape());
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) += bv[c];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ix)) accumulate(t.grad_buffer(ix), g);
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
      }
    }
  });
}

Var scale(Var x, double factor) {
  const std::size_t ix = x.id();
  return x.tape().record(map(x.value(), [factor](double v) { return factor * v; }), {x},
                         [ix, factor](Tape& t, std::size_t self) { accumulate(t.grad_buffer(ix), t.grad(self), factor); });
}

Var one_minus(Var x) {
  const std::size_t ix = x.id();
  return x.tape().record(map(x.value(), [](double v) { return 1.0 - v; }), {x},
                         [ix](Tape& t, std::size_t self) { accumulate(t.grad_buffer(ix), t.grad(self), -1.0); });
}

Var tanh(Var x) {
  const std::size_t ix = x.id();
  return x.tape().record(map(x.value(), [](double v) { return std::tanh(v); }), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var x) {
  const std::size_t ix = x.id();
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return x.tape().record(map(x.value(), f), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log(Var x) {
  const std::size_t ix = x.id();
  return x.tape().record(map(x.value(), [](double v) { return std::log(v); }), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t rows = parts[0].rows(), cols = parts[0].cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() == 0) throw std::invalid_argument("concat: scalar operand");
    if (axis == 1 && v.rows() != rows) shape_error("concat", parts[0].shape(), v.shape());
    if (axis == 0 && v.cols() != cols) shape_error("concat", parts[0].shape(), v.shape());
    offsets.push_back(total);
    total += axis == 1 ? v.cols() : v.rows();
    ids.push_back(p.id());
  }
  Tensor out(axis == 1 ? Shape{rows, total} : Shape{total, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 1) out.at(r, offsets[k] + c) = v.at(r, c);
        else out.at(offsets[k] + r, c) = v.at(r, c);
      }
    }
  }
  return parts[0].tape().record(std::move(out), parts, [ids, offsets, axis](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Tensor& gk = t.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r) {
        for (std::size_t c = 0; c < gk.cols(); ++c) {
          gk.at(r, c) += axis == 1 ? g.at(r, offsets[k] + c) : g.at(offsets[k] + r, c);
        }
      }
    }
  });
}

Var column(Var x, std::size_t j) {
  const Tensor& xv = x.value();
  require_matrix("column", xv);
  if (j >= xv.cols()) throw std::invalid_argument("column: index " + std::to_string(j) + " out of " + shape_string(xv.shape()));
  Tensor out({xv.rows(), 1});
  for (std::size_t r = 0; r < xv.rows(); ++r) out[r] = xv.at(r, j);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, j](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < g.rows(); ++r) gx.at(r, j) += g[r];
  });
}

Var scale_rows(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || wv.cols() != 1 || wv.rows() != xv.rows()) {
    shape_error("scale_rows", xv.shape(), wv.shape());
  }
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) = wv[r] * xv.at(r, c);
  }
  const std::size_t ix = x.id(), iw = w.id();
  return x.tape().record(std::move(out), {x, w}, [ix, iw](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& wv = t.value(iw);
    const bool dx = t.needs_grad(ix), dw = t.needs_grad(iw);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        if (dx) t.grad_buffer(ix).at(r, c) += wv[r] * g.at(r, c);
        acc += xv.at(r, c) * g.at(r, c);
      }
      if (dw) t.grad_buffer(iw)[r] += acc;
    }
  });
}

namespace {

struct AxisLayout {
  std::size_t outer, length, inner;
};

AxisLayout layout_for(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  AxisLayout l{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

// y <- softmax(x) over each lane; lanes with mask 0 are excluded and set to 0.
void softmax_lanes(const Tensor& x, const Tensor* mask, const AxisLayout& l, Tensor& y) {
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      auto idx = [&](std::size_t k) { return (o * l.length + k) * l.inner + in; };
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t k = 0; k < l.length; ++k) {
        if (mask && (*mask)[idx(k)] == 0.0) continue;
        mx = std::max(mx, x[idx(k)]);
        any = true;
      }
      if (!any) throw std::invalid_argument("softmax: every position is masked");
      double total = 0.0;
      for (std::size_t k = 0; k < l.length; ++k) {
        const bool live = !mask || (*mask)[idx(k)] != 0.0;
        const double e = live ? std::exp(x[idx(k)] - mx) : 0.0;
        y[idx(k)] = e;
        total += e;
      }
      for (std::size_t k = 0; k < l.length; ++k) y[idx(k)] /= total;
    }
  }
}

Tape::BackwardFn softmax_backward(std::size_t ix, AxisLayout l) {
  return [ix, l](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        auto idx = [&](std::size_t k) { return (o * l.length + k) * l.inner + in; };
        double dot = 0.0;
        for (std::size_t k = 0; k < l.length; ++k) dot += g[idx(k)] * y[idx(k)];
        for (std::size_t k = 0; k < l.length; ++k) gx[idx(k)] += y[idx(k)] * (g[idx(k)] - dot);
      }
    }
  };
}

}  // namespace

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisLayout l = layout_for(xv.shape(), axis);
  Tensor out(xv.shape());
  softmax_lanes(xv, nullptr, l, out);
  return x.tape().record(std::move(out), {x}, softmax_backward(x.id(), l));
}

Var masked_softmax(Var x, const Tensor& mask) {
  const Tensor& xv = x.value();
  if (mask.shape() != xv.shape()) shape_error("masked_softmax", xv.shape(), mask.shape());
  require_matrix("masked_softmax", xv);
  const AxisLayout l = layout_for(xv.shape(), 1);
  Tensor out(xv.shape());
  softmax_lanes(xv, &mask, l, out);
  return x.tape().record(std::move(out), {x}, softmax_backward(x.id(), l));
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  require_matrix("gather_rows", tv);
  if (ids.empty()) throw std::invalid_argument("gather_rows: no ids");
  std::vector<int> rows(ids.begin(), ids.end());
  Tensor out({rows.size(), tv.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(rows[r]) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(&tv.data()[rows[r] * tv.cols()], tv.cols(), &out.data()[r * tv.cols()]);
  }
  const std::size_t it = table.id();
  return table.tape().record(std::move(out), {table}, [it, rows](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad_buffer(it);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) gt.at(rows[r], c) += g.at(r, c);
    }
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor::scalar(total), {x}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    for (double& v : t.grad_buffer(ix).data()) v += g;
  });
}

Var cross_entropy(Var probs, std::span<const int> targets, std::span<const double> mask) {
  const Tensor& p = probs.value();
  require_matrix("cross_entropy", p);
  if (targets.size() != p.rows() || mask.size() != p.rows()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                                std::to_string(mask.size()) + " mask entries for " + shape_string(p.shape()));
  }
  double denom = 0.0;
  for (double m : mask) denom += m;
  if (denom <= 0.0) throw std::invalid_argument("cross_entropy: no unmasked positions");
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= p.cols()) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(targets[r]) + " outside vocabulary of " +
                              std::to_string(p.cols()));
    }
    if (mask[r] == 0.0) continue;
    total -= mask[r] * std::log(p.at(r, targets[r]));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> mk(mask.begin(), mask.end());
  const std::size_t ip = probs.id();
  return probs.tape().record(Tensor::scalar(total / denom), {probs}, [ip, tg, mk, denom](Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    const Tensor& p = t.value(ip);
    Tensor& gp = t.grad_buffer(ip);
    for (std::size_t r = 0; r < tg.size(); ++r) {
      if (mk[r] == 0.0) continue;
      gp.at(r, tg[r]) -= g * mk[r] / (denom * p.at(r, tg[r]));
    }
  });
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::kEval || rate == 0.0) return x;
  Tensor keep(x.shape());
  const double survivor = 1.0 / (1.0 - rate);
  for (double& k : keep.data()) k = rng.uniform() < rate ? 0.0 : survivor;
  return mul(x, x.tape().constant(std::move(keep)));
}

}  // namespace mmt
