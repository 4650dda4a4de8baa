// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmt {

namespace {

Tensor gather(const Tensor& rows, std::span<const std::size_t> index) {
  Tensor out({index.size(), rows.cols()});
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= rows.rows()) throw std::out_of_range("hypothesis parent out of range");
    std::copy_n(rows.data().begin() + index[k] * rows.cols(), rows.cols(), out.data().begin() + k * rows.cols());
  }
  return out;
}

}  // namespace

ModelSession::ModelSession(ModelParams& params, std::span<const int> src, const Tensor& features)
    : params_(params), source_(EncodedSource::compute(src, features, params)), state_(source_.state) {}

Tensor ModelSession::advance(std::span<const std::size_t> parents, std::span<const int> tokens) {
  if (parents.size() != tokens.size() || parents.empty()) {
    throw std::invalid_argument("advance: parents and tokens must be non-empty and aligned");
  }
  const std::size_t K = parents.size();
  Tape tape(false);
  Annotations ann = source_.bind(tape, K);
  std::vector<std::size_t> zeros(K, 0);
  Var visual = tape.constant(gather(source_.visual, zeros));
  Var state = tape.constant(gather(state_, parents));
  StepResult r = decoder_step(tokens, state, ann, visual, params_);
  state_ = r.state.value();
  context_ = r.context.value();
  return r.probs.value();
}

Tensor ensemble_step(std::span<const Tensor> distributions, EnsembleRule rule) {
  if (distributions.empty()) throw std::invalid_argument("ensemble_step: no distributions");
  const Shape& shape = distributions.front().shape();
  for (const Tensor& d : distributions) {
    if (d.shape() != shape) {
      throw std::invalid_argument("ensemble_step: vocabulary mismatch " + shape_string(shape) + " vs " +
                                  shape_string(d.shape()));
    }
  }
  const double k = static_cast<double>(distributions.size());
  Tensor out(shape);
  if (rule == EnsembleRule::kArithmetic) {
    for (const Tensor& d : distributions) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    }
    for (double& v : out.data()) v /= k;
    return out;
  }
  for (const Tensor& d : distributions) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::log(d[i]) / k;
  }
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < out.cols(); ++c) mx = std::max(mx, out[r * out.cols() + c]);
    double total = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) total += (out[r * out.cols() + c] = std::exp(out[r * out.cols() + c] - mx));
    for (std::size_t c = 0; c < out.cols(); ++c) out[r * out.cols() + c] /= total;
  }
  return out;
}

EnsembleSession::EnsembleSession(std::vector<std::unique_ptr<DecoderSession>> members, EnsembleRule rule)
    : members_(std::move(members)), rule_(rule) {
  if (members_.empty()) throw std::invalid_argument("ensemble needs at least one model");
  for (const auto& m : members_) {
    if (m->vocab_size() != members_.front()->vocab_size()) {
      throw std::invalid_argument("ensemble members disagree on the target vocabulary size");
    }
  }
}

Tensor EnsembleSession::advance(std::span<const std::size_t> parents, std::span<const int> tokens) {
  if (members_.size() == 1) return members_.front()->advance(parents, tokens);
  std::vector<Tensor> dists;
  dists.reserve(members_.size());
  for (auto& m : members_) dists.push_back(m->advance(parents, tokens));
  return ensemble_step(dists, rule_);
}

double Hypothesis::normalized_score() const {
  return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
}

namespace {

struct Candidate {
  double log_prob;
  std::size_t parent;
  int token;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.token != b.token) return a.token < b.token;
  return a.parent < b.parent;
}

}  // namespace

SearchResult beam_search(DecoderSession& session, const SearchOptions& options) {
  if (options.max_len < 1) throw std::invalid_argument("beam_search: max_len must be at least 1");
  if (options.beam < 1) throw std::invalid_argument("beam_search: beam must be at least 1");
  const std::size_t V = session.vocab_size();

  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  std::vector<Hypothesis> truncated;
  std::vector<std::size_t> parents{0};
  std::vector<int> tokens{kBos};

  for (std::size_t len = 1; len <= options.max_len && !live.empty(); ++len) {
    const Tensor dist = session.advance(parents, tokens);
    if (dist.rows() != live.size() || dist.cols() != V) {
      throw std::logic_error("decoder session returned " + shape_string(dist.shape()));
    }
    std::vector<Candidate> cands;
    cands.reserve(live.size() * V);
    for (std::size_t k = 0; k < live.size(); ++k) {
      for (std::size_t v = 0; v < V; ++v) {
        if (static_cast<int>(v) == kBos || static_cast<int>(v) == kPad) continue;
        cands.push_back({live[k].log_prob + std::log(dist.at(k, v)), k, static_cast<int>(v)});
      }
    }
    const std::size_t keep = std::min(options.beam - finished.size(), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

    std::vector<Hypothesis> next;
    parents.clear();
    tokens.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        h.row = next.size();
        parents.push_back(live[c.parent].row);
        tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= options.beam) break;
  }
  truncated = std::move(live);

  auto score = [&](const Hypothesis& h) { return options.length_normalize ? h.normalized_score() : h.log_prob; };
  const std::vector<Hypothesis>& pool = finished.empty() ? truncated : finished;
  if (pool.empty()) throw std::logic_error("beam search produced no hypothesis");
  const Hypothesis* best = &pool.front();
  for (const Hypothesis& h : pool) {
    if (score(h) > score(*best)) best = &h;
  }
  SearchResult result;
  result.tokens = best->tokens;
  if (best->finished) result.tokens.pop_back();
  result.log_prob = best->log_prob;
  result.score = score(*best);
  result.finished = best->finished;
  return result;
}

SearchResult translate(std::span<ModelParams* const> models, std::span<const int> src, const Tensor& features,
                       const SearchOptions& options, EnsembleRule rule) {
  if (models.empty()) throw std::invalid_argument("translate: no models");
  std::vector<std::unique_ptr<DecoderSession>> sessions;
  for (ModelParams* m : models) sessions.push_back(std::make_unique<ModelSession>(*m, src, features));
  EnsembleSession ensemble(std::move(sessions), rule);
  return beam_search(ensemble, options);
}

}  // namespace mmt
