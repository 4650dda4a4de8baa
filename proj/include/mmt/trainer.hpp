// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/model.hpp"
#include "mmt/random.hpp"

namespace mmt {

/// Uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out)) for a [fan_in x fan_out] matrix.
Tensor xavier_init(const Shape& shape, Rng& rng);

/// Xavier for every matrix, zeros for every vector, in parameter visit order.
void initialize(ModelParams& params, Rng& rng);

double global_grad_norm(std::span<Parameter* const> params);

/// Rescales all gradients by max_norm / norm when the global L2 norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm = 5.0);

struct AdamConfig {
  double learning_rate = 0.0004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update from the gradients stored in `params`.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  Variant variant = Variant::kDeepGru;
  std::uint64_t seed = 1234;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  AdamConfig adam;
  DropoutRates dropout;
  std::size_t eval_interval = 1000;
  std::size_t patience = 10;
  std::size_t max_updates = 1000000;
  std::size_t beam = 12;
  std::size_t emb_dim = 128;
  std::size_t hidden_dim = 256;
  std::size_t feature_dim = 2048;
  bool biases = true;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;

  ModelConfig model_config() const;
  /// Desk-scale dimensions: d=8, S=16, feature dim 32.
  void use_desk_dims();
  void validate() const;

  /// UTF-8 "key = value" lines; '#' starts a comment.
  std::string to_text() const;
  static TrainConfig from_text(std::string_view text);
  /// Applies the keys present in `text` on top of this configuration.
  void merge_text(std::string_view text);
};

/// Token-id sentences with one image feature row per pair.
struct ParallelData {
  std::vector<std::vector<int>> sources;
  std::vector<std::vector<int>> targets;
  Tensor features;  // [pairs x F]

  std::size_t size() const { return sources.size(); }
  /// Batch of the given pair indices.
  Batch batch(std::span<const std::size_t> indices) const;
};

/// Mean per-token loss of `data` in evaluation mode.
double corpus_loss(ModelParams& params, const ParallelData& data, std::size_t batch_size = 32);

using Detokenizer = std::function<std::string(std::span<const int>)>;

/// Decodes every source of `data` and returns the hypotheses (without <eos>).
/// Maximum length per sentence is 2 * M + 5.
std::vector<std::vector<int>> decode_all(std::span<ModelParams* const> models, const ParallelData& data,
                                         std::size_t beam);

/// Corpus BLEU-4 of beam decoding against the targets of `data`.
double validation_bleu(ModelParams& params, const ParallelData& data, const Detokenizer& detok, std::size_t beam = 1);

struct LogEntry {
  std::size_t update = 0;
  double loss = 0.0;      // mean training batch loss since the previous entry
  double val_bleu = 0.0;
};

/// "update<TAB>loss<TAB>val_bleu"
std::string format_log_line(const LogEntry& e);

struct TrainHooks {
  /// Validation metric (higher is better). Defaults to greedy BLEU on the validation set.
  std::function<double(ModelParams&)> validate;
  Detokenizer detokenize;
  std::function<void(const ModelParams&, const AdamState&, const LogEntry&)> on_improvement;
  std::function<void(const LogEntry&)> on_log;
};

struct TrainResult {
  std::vector<LogEntry> history;
  std::vector<double> batch_losses;  // one per update
  ModelParams best;
  double best_metric = 0.0;
  std::size_t updates = 0;
  std::size_t evaluations = 0;
  bool early_stopped = false;
};

/// Optimizes `params` in place: seeded length-bucketed shuffles, dropout,
/// clipping and Adam; validation every eval_interval updates, stopping after
/// `patience` evaluations without a strictly better metric.
TrainResult train(const TrainConfig& config, const ParallelData& train_data, const ParallelData& valid_data,
                  ModelParams& params, Rng& rng, const TrainHooks& hooks = {});

/// Creates and initializes a model from the config seed, then trains it.
TrainResult train(const TrainConfig& config, const ParallelData& train_data, const ParallelData& valid_data,
                  const TrainHooks& hooks = {});

}  // namespace mmt
