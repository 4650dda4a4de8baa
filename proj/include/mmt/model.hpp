// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/autodiff.hpp"
#include "mmt/layers.hpp"

namespace mmt {

/// Reserved ids shared by every vocabulary.
inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kPad = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumSpecials = 4;

enum class Variant { kBaseline, kDeepGru };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::kDeepGru;
  std::size_t emb_dim = 128;       // d
  std::size_t hidden_dim = 256;    // S == D
  std::size_t feature_dim = 2048;  // pooled image vector
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  /// Per-gate GRU biases plus attention, image and bottleneck biases. Off
  /// drops every bias from those blocks.
  bool biases = true;

  std::size_t annotation_dim() const { return 2 * hidden_dim; }

  /// Small dimensions used by tests and toy experiments.
  static ModelConfig desk(Variant variant, std::size_t src_vocab, std::size_t tgt_vocab);
};

struct DropoutRates {
  double embedding = 0.3;
  double annotation = 0.5;
  double bottleneck = 0.5;
};

/// Every weight of the translation graph. The textual output projection is the
/// transpose of the target embedding table and has no storage of its own.
struct ModelParams {
  ModelParams() = default;
  explicit ModelParams(const ModelConfig& config);

  struct BaselineHead {
    Parameter image;                   // [F x D]
    std::optional<Parameter> image_b;  // [D]
    Parameter bottleneck;              // [(d + D + D) x d]
    std::optional<Parameter> bottleneck_b;
  };

  struct DeepGruHead {
    GhtParams image;          // F -> D
    GruParams gru3;           // visual GRU block
    Parameter gru3_in;        // [(d + D + D) x D]
    Parameter bottleneck_t;   // [D x d]
    Parameter bottleneck_v;   // [D x d]
    GhtParams ght_t, ght_v;   // d -> d
    Parameter projection_v;   // [d x |V_d|]
  };

  ModelConfig config;
  EmbeddingParams src_embedding;
  EmbeddingParams tgt_embedding;
  GruParams encoder_fwd, encoder_bwd;
  GruParams decoder1, decoder2;
  Parameter att_state;   // W^s [D x 2S]
  Parameter att_annot;   // W^H [2S x 2S]
  Parameter att_score;   // W^a [2S x 1]
  std::optional<Parameter> att_b;
  Parameter context;     // W^c [2S x D]
  Parameter init_state;  // [2S x D]
  std::optional<BaselineHead> baseline;
  std::optional<DeepGruHead> deep;

  template <typename F>
  void visit(F&& f) {
    src_embedding.visit(f);
    tgt_embedding.visit(f);
    encoder_fwd.visit(f);
    encoder_bwd.visit(f);
    decoder1.visit(f);
    decoder2.visit(f);
    f(att_state);
    f(att_annot);
    f(att_score);
    if (att_b) f(*att_b);
    f(context);
    f(init_state);
    if (baseline) {
      f(baseline->image);
      if (baseline->image_b) f(*baseline->image_b);
      f(baseline->bottleneck);
      if (baseline->bottleneck_b) f(*baseline->bottleneck_b);
    }
    if (deep) {
      deep->image.visit(f);
      deep->gru3.visit(f);
      f(deep->gru3_in);
      f(deep->bottleneck_t);
      f(deep->bottleneck_v);
      deep->ght_t.visit(f);
      deep->ght_v.visit(f);
      f(deep->projection_v);
    }
  }

  std::vector<Parameter*> parameters();
  Parameter* find(std::string_view name);
  std::size_t parameter_count();

  /// W^t_proj as a value: the transposed target embedding table.
  Tensor tied_projection() const;
};

/// Padded batch, time-major: ids[t * size + b].
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;  // target tokens including the closing <eos>
  std::vector<int> src_ids;
  std::vector<double> src_mask;
  std::vector<int> tgt_in;   // previous token fed at each step, starting with <bos>
  std::vector<int> tgt_out;  // token to predict, ending with <eos>
  std::vector<double> tgt_mask;
  Tensor features;  // [size x F]

  std::span<const int> src_column(std::size_t t) const { return {src_ids.data() + t * size, size}; }
  std::span<const int> tgt_in_column(std::size_t t) const { return {tgt_in.data() + t * size, size}; }
};

/// Pads sentences into a batch. `min_src_len` / `min_tgt_len` add extra padding.
Batch make_batch(std::span<const std::vector<int>> sources, std::span<const std::vector<int>> targets,
                 const Tensor& features, std::size_t min_src_len = 0, std::size_t min_tgt_len = 0);

struct ForwardContext {
  Mode mode = Mode::kEval;
  DropoutRates dropout;
  Rng* rng = nullptr;
};

/// Encoder output. rows[t] is the [B x 2S] annotation of position t and
/// keys[t] its attention projection rows[t] W^H.
struct Annotations {
  std::vector<Var> rows;
  std::vector<Var> keys;
  Tensor mask;                     // [B x M]
  std::vector<Var> mask_columns;   // [B x 1] each
  std::vector<bool> has_padding;   // per position

  std::size_t length() const { return rows.size(); }
  /// Annotation matrix [M x 2S] of batch entry `b`.
  Tensor matrix(std::size_t b = 0) const;
};

Annotations encode(Tape& tape, const Batch& batch, ModelParams& params, const ForwardContext& ctx = {});

/// s0 = tanh(mean of unmasked annotations W_init).
Var init_decoder(const Annotations& ann, ModelParams& params);

/// Baseline: tanh(I W^img); DeepGRU: gated_tanh(I).
Var visual_project(Var features, ModelParams& params);

struct AttentionResult {
  Var weights;  // [B x M]
  Var mix;      // attention-weighted annotation sum [B x 2S]
  Var context;  // [B x D]
};

/// Soft attention over the annotations. The baseline multiplies the projected
/// context by `visual`; the DeepGRU context is textual only.
AttentionResult attention(Var s_prime, const Annotations& ann, Var visual, ModelParams& params);

struct StepResult {
  Var probs;    // [B x |V_d|]
  Var state;    // [B x D]
  Var context;  // [B x D]
  Var weights;  // [B x M]
};

StepResult step_baseline(std::span<const int> y_prev, Var state, const Annotations& ann, Var visual,
                         ModelParams& params, const ForwardContext& ctx = {});
StepResult step_deepgru(std::span<const int> y_prev, Var state, const Annotations& ann, Var visual,
                        ModelParams& params, const ForwardContext& ctx = {});
/// Dispatches on the configured variant.
StepResult decoder_step(std::span<const int> y_prev, Var state, const Annotations& ann, Var visual,
                        ModelParams& params, const ForwardContext& ctx = {});

/// Mean masked cross-entropy of the gold targets under teacher forcing.
Var forward_loss(Tape& tape, const Batch& batch, ModelParams& params, const ForwardContext& ctx = {});

/// Encoder results for one sentence kept as plain tensors, so decoding can
/// rebind them to fresh tapes with any number of hypothesis rows.
struct EncodedSource {
  std::vector<Tensor> rows;
  std::vector<Tensor> keys;
  Tensor visual;  // [1 x D]
  Tensor state;   // [1 x D]

  static EncodedSource compute(std::span<const int> src, const Tensor& features, ModelParams& params);
  /// Annotations with every row repeated `copies` times, as constants on `tape`.
  Annotations bind(Tape& tape, std::size_t copies) const;
};

}  // namespace mmt
