// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "mmt/model.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

/// Incremental scorer for one source sentence. Hypotheses are rows: each call
/// first rearranges the stored per-hypothesis state so that new row k continues
/// old row parents[k], then feeds tokens[k] and returns next-token
/// distributions [K x V]. The first call has parents == {0} and tokens == {<bos>}.
class DecoderSession {
 public:
  virtual ~DecoderSession() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual Tensor advance(std::span<const std::size_t> parents, std::span<const int> tokens) = 0;
};

/// Decodes with a trained model; parameters are only read.
class ModelSession : public DecoderSession {
 public:
  ModelSession(ModelParams& params, std::span<const int> src, const Tensor& features);

  std::size_t vocab_size() const override { return params_.config.tgt_vocab; }
  Tensor advance(std::span<const std::size_t> parents, std::span<const int> tokens) override;

  /// Attention context of every row after the last advance().
  const Tensor& last_context() const { return context_; }

 private:
  ModelParams& params_;
  EncodedSource source_;
  Tensor state_;  // [K x D]
  Tensor context_;
};

enum class EnsembleRule { kArithmetic, kGeometric };

/// Combines per-model distributions. Arithmetic: (1/k) sum p_i. Geometric:
/// normalized exp of the mean log-probability.
Tensor ensemble_step(std::span<const Tensor> distributions, EnsembleRule rule = EnsembleRule::kArithmetic);

class EnsembleSession : public DecoderSession {
 public:
  explicit EnsembleSession(std::vector<std::unique_ptr<DecoderSession>> members,
                           EnsembleRule rule = EnsembleRule::kArithmetic);

  std::size_t vocab_size() const override { return members_.front()->vocab_size(); }
  Tensor advance(std::span<const std::size_t> parents, std::span<const int> tokens) override;

 private:
  std::vector<std::unique_ptr<DecoderSession>> members_;
  EnsembleRule rule_;
};

struct Hypothesis {
  std::vector<int> tokens;  // emitted tokens, including a closing <eos> once finished
  double log_prob = 0.0;
  std::size_t row = 0;      // session row holding this hypothesis' state
  bool finished = false;

  /// Log-probability per emitted token.
  double normalized_score() const;
};

struct SearchOptions {
  std::size_t beam = 12;
  std::size_t max_len = 50;  // emitted tokens, <eos> included
  bool length_normalize = true;
};

struct SearchResult {
  std::vector<int> tokens;  // without <eos>
  double log_prob = 0.0;
  double score = 0.0;       // ranking score (normalized unless disabled)
  bool finished = false;
};

/// Beam search. Candidates are ranked by cumulative log-probability, ties going
/// to the lower token id; finished hypotheses leave the beam. <bos> and <pad>
/// are never emitted.
SearchResult beam_search(DecoderSession& session, const SearchOptions& options);

/// Beam search over an ensemble of models sharing the target vocabulary.
SearchResult translate(std::span<ModelParams* const> models, std::span<const int> src, const Tensor& features,
                       const SearchOptions& options, EnsembleRule rule = EnsembleRule::kArithmetic);

}  // namespace mmt
