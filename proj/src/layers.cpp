// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/layers.hpp"

#include <stdexcept>

namespace mmt {

GruParams::GruParams(const std::string& prefix, std::size_t dim, bool biases)
    : wz(prefix + ".wz", Tensor({dim, dim})),
      wr(prefix + ".wr", Tensor({dim, dim})),
      wh(prefix + ".wh", Tensor({dim, dim})) {
  if (biases) {
    bz.emplace(prefix + ".bz", Tensor({dim}));
    br.emplace(prefix + ".br", Tensor({dim}));
    bh.emplace(prefix + ".bh", Tensor({dim}));
  }
}

GhtParams::GhtParams(const std::string& prefix, std::size_t in, std::size_t out)
    : wt(prefix + ".wt", Tensor({in, out})),
      wg(prefix + ".wg", Tensor({in, out})),
      bt(prefix + ".bt", Tensor({out})),
      bg(prefix + ".bg", Tensor({out})) {}

EmbeddingParams::EmbeddingParams(const std::string& prefix, std::size_t vocab, std::size_t emb_dim,
                                 std::size_t out_dim)
    : table(prefix + ".table", Tensor({vocab, emb_dim})), projection(prefix + ".proj", Tensor({emb_dim, out_dim})) {}

namespace {

Var gate_input(Var x, Var recurrent, std::optional<Parameter>& bias) {
  Var pre = add(x, recurrent);
  return bias ? add_bias(pre, x.tape().parameter(*bias)) : pre;
}

}  // namespace

Var gru_cell(Var x, Var h_prev, GruParams& p) {
  const std::size_t d = p.dim();
  if (x.shape() != h_prev.shape() || x.cols() != d || x.value().rank() != 2) {
    throw std::invalid_argument("gru_cell: input " + shape_string(x.shape()) + " and state " +
                                shape_string(h_prev.shape()) + " do not match hidden size " + std::to_string(d));
  }
  Tape& t = x.tape();
  Var z = sigmoid(gate_input(x, matmul(h_prev, t.parameter(p.wz)), p.bz));
  Var r = sigmoid(gate_input(x, matmul(h_prev, t.parameter(p.wr)), p.br));
  Var cand = tanh(gate_input(x, mul(r, matmul(h_prev, t.parameter(p.wh))), p.bh));
  return add(mul(one_minus(z), cand), mul(z, h_prev));
}

Var gated_tanh(Var x, GhtParams& p) {
  if (x.value().rank() != 2 || x.cols() != p.wt.value.rows()) {
    throw std::invalid_argument("gated_tanh: input " + shape_string(x.shape()) + " against weights " +
                                shape_string(p.wt.value.shape()));
  }
  Tape& t = x.tape();
  Var y = tanh(add_bias(matmul(x, t.parameter(p.wt)), t.parameter(p.bt)));
  Var g = sigmoid(add_bias(matmul(x, t.parameter(p.wg)), t.parameter(p.bg)));
  return mul(y, g);
}

Var lookup(Tape& tape, std::span<const int> ids, EmbeddingParams& p) {
  return gather_rows(tape.parameter(p.table), ids);
}

Var embed(Tape& tape, std::span<const int> ids, EmbeddingParams& p) {
  return matmul(lookup(tape, ids, p), tape.parameter(p.projection));
}

}  // namespace mmt
