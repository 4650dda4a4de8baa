// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "mmt/autodiff.hpp"

namespace mmt {

/// State-to-state matrices of one GRU block. The input is added unprojected to
/// every gate, so it must already have the hidden extent.
struct GruParams {
  GruParams() = default;
  GruParams(const std::string& prefix, std::size_t dim, bool biases);

  std::size_t dim() const { return wz.value.rows(); }

  template <typename F>
  void visit(F&& f) {
    f(wz);
    f(wr);
    f(wh);
    if (bz) {
      f(*bz);
      f(*br);
      f(*bh);
    }
  }

  Parameter wz, wr, wh;
  std::optional<Parameter> bz, br, bh;
};

/// Gated hyperbolic tangent mapping n inputs to m outputs.
struct GhtParams {
  GhtParams() = default;
  GhtParams(const std::string& prefix, std::size_t in, std::size_t out);

  template <typename F>
  void visit(F&& f) {
    f(wt);
    f(wg);
    f(bt);
    f(bg);
  }

  Parameter wt, wg;
  Parameter bt, bg;
};

/// Embedding table [vocab x d] followed by a projection [d x D].
struct EmbeddingParams {
  EmbeddingParams() = default;
  EmbeddingParams(const std::string& prefix, std::size_t vocab, std::size_t emb_dim, std::size_t out_dim);

  std::size_t vocab_size() const { return table.value.rows(); }

  template <typename F>
  void visit(F&& f) {
    f(table);
    f(projection);
  }

  Parameter table;
  Parameter projection;
};

/// h' = (1 - z) * cand + z * h_prev with
/// z = sigmoid(x + h_prev Wz), r = sigmoid(x + h_prev Wr), cand = tanh(x + r * (h_prev Wh)).
/// x and h_prev are [B x D].
Var gru_cell(Var x, Var h_prev, GruParams& p);

/// tanh(x Wt + bt) * sigmoid(x Wg + bg).
Var gated_tanh(Var x, GhtParams& p);

/// Embedding rows for `ids`, [ids.size() x d].
Var lookup(Tape& tape, std::span<const int> ids, EmbeddingParams& p);

/// Projected embeddings, [ids.size() x D].
Var embed(Tape& tape, std::span<const int> ids, EmbeddingParams& p);

}  // namespace mmt
