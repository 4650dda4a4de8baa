// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace mmt {

std::string_view variant_name(Variant v) { return v == Variant::kBaseline ? "baseline" : "deepgru"; }

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "deepgru") return Variant::kDeepGru;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected baseline or deepgru)");
}

ModelConfig ModelConfig::desk(Variant variant, std::size_t src_vocab, std::size_t tgt_vocab) {
  ModelConfig c;
  c.variant = variant;
  c.emb_dim = 8;
  c.hidden_dim = 16;
  c.feature_dim = 32;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  return c;
}

ModelParams::ModelParams(const ModelConfig& cfg) : config(cfg) {
  if (cfg.src_vocab <= kNumSpecials || cfg.tgt_vocab <= kNumSpecials) {
    throw std::invalid_argument("vocabularies must hold more than the reserved special tokens");
  }
  const std::size_t d = cfg.emb_dim, D = cfg.hidden_dim, A = cfg.annotation_dim(), F = cfg.feature_dim;
  const std::size_t V = cfg.tgt_vocab;
  src_embedding = EmbeddingParams("src_emb", cfg.src_vocab, d, D);
  tgt_embedding = EmbeddingParams("tgt_emb", V, d, D);
  encoder_fwd = GruParams("enc_fwd", D, cfg.biases);
  encoder_bwd = GruParams("enc_bwd", D, cfg.biases);
  decoder1 = GruParams("dec_gru1", D, cfg.biases);
  decoder2 = GruParams("dec_gru2", D, cfg.biases);
  att_state = Parameter("att.w_state", Tensor({D, A}));
  att_annot = Parameter("att.w_annot", Tensor({A, A}));
  att_score = Parameter("att.w_score", Tensor({A, 1}));
  if (cfg.biases) att_b.emplace("att.b", Tensor({A}));
  context = Parameter("att.w_ctx", Tensor({A, D}));
  init_state = Parameter("dec_init.w", Tensor({A, D}));
  if (cfg.variant == Variant::kBaseline) {
    BaselineHead h;
    h.image = Parameter("img.w", Tensor({F, D}));
    if (cfg.biases) h.image_b.emplace("img.b", Tensor({D}));
    h.bottleneck = Parameter("bot.w", Tensor({d + D + D, d}));
    if (cfg.biases) h.bottleneck_b.emplace("bot.b", Tensor({d}));
    baseline = std::move(h);
  } else {
    DeepGruHead h;
    h.image = GhtParams("img_ght", F, D);
    h.gru3 = GruParams("dec_gru3", D, cfg.biases);
    h.gru3_in = Parameter("dec_gru3.w_in", Tensor({d + D + D, D}));
    h.bottleneck_t = Parameter("bot_t.w", Tensor({D, d}));
    h.bottleneck_v = Parameter("bot_v.w", Tensor({D, d}));
    h.ght_t = GhtParams("bot_t_ght", d, d);
    h.ght_v = GhtParams("bot_v_ght", d, d);
    h.projection_v = Parameter("proj_v.w", Tensor({d, V}));
    deep = std::move(h);
  }
}

std::vector<Parameter*> ModelParams::parameters() {
  std::vector<Parameter*> out;
  visit([&](Parameter& p) { out.push_back(&p); });
  return out;
}

Parameter* ModelParams::find(std::string_view name) {
  Parameter* found = nullptr;
  visit([&](Parameter& p) {
    if (p.name == name) found = &p;
  });
  return found;
}

std::size_t ModelParams::parameter_count() {
  std::size_t n = 0;
  visit([&](Parameter& p) { n += p.value.size(); });
  return n;
}

Tensor ModelParams::tied_projection() const { return transposed(tgt_embedding.table.value); }

Batch make_batch(std::span<const std::vector<int>> sources, std::span<const std::vector<int>> targets,
                 const Tensor& features, std::size_t min_src_len, std::size_t min_tgt_len) {
  if (sources.empty() || sources.size() != targets.size()) {
    throw std::invalid_argument("batch needs matching, non-empty source and target lists");
  }
  if (features.rank() != 2 || features.rows() != sources.size()) {
    throw std::invalid_argument("batch features " + shape_string(features.shape()) + " do not cover " +
                                std::to_string(sources.size()) + " sentences");
  }
  Batch b;
  b.size = sources.size();
  b.src_len = min_src_len;
  b.tgt_len = min_tgt_len;
  for (std::size_t i = 0; i < b.size; ++i) {
    if (sources[i].empty()) throw std::invalid_argument("empty source sentence in batch");
    b.src_len = std::max(b.src_len, sources[i].size());
    b.tgt_len = std::max(b.tgt_len, targets[i].size() + 1);
  }
  b.src_ids.assign(b.src_len * b.size, kPad);
  b.src_mask.assign(b.src_len * b.size, 0.0);
  b.tgt_in.assign(b.tgt_len * b.size, kPad);
  b.tgt_out.assign(b.tgt_len * b.size, kPad);
  b.tgt_mask.assign(b.tgt_len * b.size, 0.0);
  for (std::size_t i = 0; i < b.size; ++i) {
    for (std::size_t t = 0; t < sources[i].size(); ++t) {
      b.src_ids[t * b.size + i] = sources[i][t];
      b.src_mask[t * b.size + i] = 1.0;
    }
    const auto& tgt = targets[i];
    for (std::size_t t = 0; t <= tgt.size(); ++t) {
      b.tgt_in[t * b.size + i] = t == 0 ? kBos : tgt[t - 1];
      b.tgt_out[t * b.size + i] = t == tgt.size() ? kEos : tgt[t];
      b.tgt_mask[t * b.size + i] = 1.0;
    }
  }
  b.features = features;
  return b;
}

Tensor Annotations::matrix(std::size_t b) const {
  const std::size_t width = rows.front().cols();
  Tensor out({rows.size(), width});
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const Tensor& r = rows[t].value();
    for (std::size_t c = 0; c < width; ++c) out.at(t, c) = r.at(b, c);
  }
  return out;
}

namespace {

// new where mask is 1, old where it is 0.
Var blend(Var fresh, Var old, Var mask_col, Var inverse_col) {
  return add(scale_rows(fresh, mask_col), scale_rows(old, inverse_col));
}

Var optional_bias(Var x, std::optional<Parameter>& bias) {
  return bias ? add_bias(x, x.tape().parameter(*bias)) : x;
}

Rng& require_rng(const ForwardContext& ctx) {
  if (ctx.mode == Mode::kTrain && ctx.rng == nullptr) throw std::invalid_argument("training mode needs an Rng");
  static Rng unused(0);
  return ctx.rng ? *ctx.rng : unused;
}

}  // namespace

Annotations encode(Tape& tape, const Batch& batch, ModelParams& params, const ForwardContext& ctx) {
  const std::size_t B = batch.size, M = batch.src_len, D = params.config.hidden_dim;
  if (M == 0 || B == 0) throw std::invalid_argument("encode: empty source");
  Rng& rng = require_rng(ctx);

  Annotations ann;
  ann.mask = Tensor({B, M});
  std::vector<Var> inverse_columns;
  for (std::size_t t = 0; t < M; ++t) {
    Tensor m({B, 1}), inv({B, 1});
    bool padded = false;
    for (std::size_t b = 0; b < B; ++b) {
      const double v = batch.src_mask[t * B + b];
      m[b] = v;
      inv[b] = 1.0 - v;
      ann.mask.at(b, t) = v;
      padded = padded || v == 0.0;
    }
    ann.mask_columns.push_back(tape.constant(std::move(m)));
    inverse_columns.push_back(tape.constant(std::move(inv)));
    ann.has_padding.push_back(padded);
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (batch.src_mask[b] == 0.0) throw std::invalid_argument("encode: empty source sentence");
  }

  std::vector<Var> inputs;
  for (std::size_t t = 0; t < M; ++t) {
    inputs.push_back(dropout(embed(tape, batch.src_column(t), params.src_embedding), ctx.dropout.embedding, ctx.mode, rng));
  }

  const Var zeros = tape.constant(Tensor({B, D}));
  std::vector<Var> fwd(M), bwd(M);
  Var h = zeros;
  for (std::size_t t = 0; t < M; ++t) {
    Var next = gru_cell(inputs[t], h, params.encoder_fwd);
    h = ann.has_padding[t] ? blend(next, h, ann.mask_columns[t], inverse_columns[t]) : next;
    fwd[t] = h;
  }
  h = zeros;
  for (std::size_t t = M; t-- > 0;) {
    Var next = gru_cell(inputs[t], h, params.encoder_bwd);
    h = ann.has_padding[t] ? blend(next, h, ann.mask_columns[t], inverse_columns[t]) : next;
    bwd[t] = h;
  }

  Var w_annot = tape.parameter(params.att_annot);
  for (std::size_t t = 0; t < M; ++t) {
    Var row = concat({fwd[t], bwd[t]});
    if (ann.has_padding[t]) row = scale_rows(row, ann.mask_columns[t]);
    row = dropout(row, ctx.dropout.annotation, ctx.mode, rng);
    ann.rows.push_back(row);
    ann.keys.push_back(matmul(row, w_annot));
  }
  return ann;
}

Var init_decoder(const Annotations& ann, ModelParams& params) {
  if (ann.length() == 0) throw std::invalid_argument("init_decoder: no annotations");
  Tape& tape = ann.rows.front().tape();
  Var total = ann.has_padding[0] ? scale_rows(ann.rows[0], ann.mask_columns[0]) : ann.rows[0];
  for (std::size_t t = 1; t < ann.length(); ++t) {
    total = add(total, ann.has_padding[t] ? scale_rows(ann.rows[t], ann.mask_columns[t]) : ann.rows[t]);
  }
  const std::size_t B = ann.mask.rows();
  Tensor inverse_count({B, 1});
  for (std::size_t b = 0; b < B; ++b) {
    double n = 0.0;
    for (std::size_t t = 0; t < ann.length(); ++t) n += ann.mask.at(b, t);
    inverse_count[b] = 1.0 / n;
  }
  Var mean = scale_rows(total, tape.constant(std::move(inverse_count)));
  return tanh(matmul(mean, tape.parameter(params.init_state)));
}

Var visual_project(Var features, ModelParams& params) {
  if (features.value().rank() != 2 || features.cols() != params.config.feature_dim) {
    throw std::invalid_argument("visual_project: features " + shape_string(features.shape()) + " but model expects " +
                                std::to_string(params.config.feature_dim) + " columns");
  }
  if (params.baseline) {
    Var lin = matmul(features, features.tape().parameter(params.baseline->image));
    return tanh(optional_bias(lin, params.baseline->image_b));
  }
  return gated_tanh(features, params.deep->image);
}

AttentionResult attention(Var s_prime, const Annotations& ann, Var visual, ModelParams& params) {
  Tape& tape = s_prime.tape();
  Var query = optional_bias(matmul(s_prime, tape.parameter(params.att_state)), params.att_b);
  Var w_score = tape.parameter(params.att_score);
  std::vector<Var> scores;
  scores.reserve(ann.length());
  for (std::size_t t = 0; t < ann.length(); ++t) {
    scores.push_back(matmul(tanh(add(query, ann.keys[t])), w_score));
  }
  Var weights = masked_softmax(concat(scores), ann.mask);
  Var ctx = scale_rows(ann.rows[0], column(weights, 0));
  for (std::size_t t = 1; t < ann.length(); ++t) ctx = add(ctx, scale_rows(ann.rows[t], column(weights, t)));
  Var projected = matmul(ctx, tape.parameter(params.context));
  if (params.baseline) projected = mul(projected, visual);
  return {weights, ctx, projected};
}

namespace {

void check_ids(std::span<const int> ids, std::size_t vocab) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("target id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

}  // namespace

StepResult step_baseline(std::span<const int> y_prev, Var state, const Annotations& ann, Var visual,
                         ModelParams& params, const ForwardContext& ctx) {
  if (!params.baseline) throw std::logic_error("step_baseline on a DeepGRU model");
  check_ids(y_prev, params.config.tgt_vocab);
  Tape& tape = state.tape();
  Rng& rng = require_rng(ctx);
  Var y_emb = lookup(tape, y_prev, params.tgt_embedding);
  Var y_proj = matmul(y_emb, tape.parameter(params.tgt_embedding.projection));
  Var s_prime = gru_cell(y_proj, state, params.decoder1);
  AttentionResult att = attention(s_prime, ann, visual, params);
  Var s = gru_cell(att.context, s_prime, params.decoder2);
  Var bot_in = concat({y_emb, s, att.context});
  Var b = tanh(optional_bias(matmul(bot_in, tape.parameter(params.baseline->bottleneck)), params.baseline->bottleneck_b));
  b = dropout(b, ctx.dropout.bottleneck, ctx.mode, rng);
  Var logits = matmul(b, transpose(tape.parameter(params.tgt_embedding.table)));
  return {softmax(logits, 1), s, att.context, att.weights};
}

StepResult step_deepgru(std::span<const int> y_prev, Var state, const Annotations& ann, Var visual,
                        ModelParams& params, const ForwardContext& ctx) {
  if (!params.deep) throw std::logic_error("step_deepgru on a baseline model");
  check_ids(y_prev, params.config.tgt_vocab);
  Tape& tape = state.tape();
  Rng& rng = require_rng(ctx);
  auto& head = *params.deep;
  Var y_emb = lookup(tape, y_prev, params.tgt_embedding);
  Var y_proj = matmul(y_emb, tape.parameter(params.tgt_embedding.projection));
  Var s_prime = gru_cell(y_proj, state, params.decoder1);
  AttentionResult att = attention(s_prime, ann, visual, params);
  Var s = gru_cell(att.context, s_prime, params.decoder2);

  Var visual_in = matmul(concat({y_emb, s_prime, visual}), tape.parameter(head.gru3_in));
  Var visual_state = gru_cell(visual_in, s, head.gru3);
  Var b_v = gated_tanh(matmul(visual_state, tape.parameter(head.bottleneck_v)), head.ght_v);
  Var b_t = gated_tanh(matmul(s, tape.parameter(head.bottleneck_t)), head.ght_t);
  b_v = dropout(b_v, ctx.dropout.bottleneck, ctx.mode, rng);
  b_t = dropout(b_t, ctx.dropout.bottleneck, ctx.mode, rng);
  Var logits = add(matmul(b_t, transpose(tape.parameter(params.tgt_embedding.table))),
                   matmul(b_v, tape.parameter(head.projection_v)));
  return {softmax(logits, 1), s, att.context, att.weights};
}

StepResult decoder_step(std::span<const int> y_prev, Var state, const Annotations& ann, Var visual,
                        ModelParams& params, const ForwardContext& ctx) {
  return params.baseline ? step_baseline(y_prev, state, ann, visual, params, ctx)
                         : step_deepgru(y_prev, state, ann, visual, params, ctx);
}

Var forward_loss(Tape& tape, const Batch& batch, ModelParams& params, const ForwardContext& ctx) {
  if (batch.tgt_len == 0) throw std::invalid_argument("forward_loss: empty target");
  Annotations ann = encode(tape, batch, params, ctx);
  Var state = init_decoder(ann, params);
  Var visual = visual_project(tape.constant(batch.features), params);
  std::vector<Var> probs;
  probs.reserve(batch.tgt_len);
  for (std::size_t t = 0; t < batch.tgt_len; ++t) {
    StepResult r = decoder_step(batch.tgt_in_column(t), state, ann, visual, params, ctx);
    probs.push_back(r.probs);
    state = r.state;
  }
  return cross_entropy(concat(probs, 0), batch.tgt_out, batch.tgt_mask);
}

EncodedSource EncodedSource::compute(std::span<const int> src, const Tensor& features, ModelParams& params) {
  if (src.empty()) throw std::invalid_argument("cannot decode an empty source sentence");
  Tensor feats = features;
  if (feats.rank() == 1) feats = Tensor({1, features.size()}, std::vector<double>(features.data().begin(), features.data().end()));
  std::vector<std::vector<int>> sources{std::vector<int>(src.begin(), src.end())};
  std::vector<std::vector<int>> targets{{}};
  Batch batch = make_batch(sources, targets, feats);
  Tape tape(false);
  Annotations ann = encode(tape, batch, params);
  EncodedSource out;
  for (std::size_t t = 0; t < ann.length(); ++t) {
    out.rows.push_back(ann.rows[t].value());
    out.keys.push_back(ann.keys[t].value());
  }
  out.state = init_decoder(ann, params).value();
  out.visual = visual_project(tape.constant(batch.features), params).value();
  return out;
}

namespace {

Tensor repeat_row(const Tensor& row, std::size_t copies) {
  Tensor out({copies, row.cols()});
  for (std::size_t k = 0; k < copies; ++k) std::copy(row.data().begin(), row.data().end(), out.data().begin() + k * row.cols());
  return out;
}

}  // namespace

Annotations EncodedSource::bind(Tape& tape, std::size_t copies) const {
  Annotations ann;
  const std::size_t M = rows.size();
  ann.mask = Tensor({copies, M}, 1.0);
  for (std::size_t t = 0; t < M; ++t) {
    ann.rows.push_back(tape.constant(repeat_row(rows[t], copies)));
    ann.keys.push_back(tape.constant(repeat_row(keys[t], copies)));
    ann.mask_columns.push_back(tape.constant(Tensor({copies, 1}, 1.0)));
    ann.has_padding.push_back(false);
  }
  return ann;
}

}  // namespace mmt
