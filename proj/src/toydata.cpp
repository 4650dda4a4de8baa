// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/toydata.hpp"

#include <algorithm>
#include <stdexcept>

#include "mmt/metrics.hpp"

namespace mmt {

namespace {

constexpr std::size_t kMinLen = 3;
constexpr std::size_t kMaxLen = 8;
constexpr std::size_t kClasses = 4;

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

void check(std::size_t pairs, std::size_t feature_dim) {
  if (pairs == 0 || feature_dim == 0) throw std::invalid_argument("toy data needs positive pairs and feature dim");
}

}  // namespace

std::vector<std::string> toy_words() {
  std::vector<std::string> words;
  for (char c = 'a'; c <= 'z'; ++c) words.emplace_back(1, c);
  return words;
}

ToyCorpus make_copy_task(std::size_t pairs, std::size_t feature_dim, Rng& rng) {
  check(pairs, feature_dim);
  const auto words = toy_words();
  ToyCorpus c;
  c.features = Tensor({pairs, feature_dim});
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t len = kMinLen + rng.below(kMaxLen - kMinLen + 1);
    std::vector<std::string> s;
    for (std::size_t k = 0; k < len; ++k) s.push_back(words[rng.below(words.size())]);
    c.sources.push_back(join(s));
    c.targets.push_back(c.sources.back());
  }
  for (double& v : c.features.data()) v = rng.uniform(-1.0, 1.0);
  return c;
}

ToyCorpus make_noisy_task(std::size_t pairs, std::size_t feature_dim, Rng& rng) {
  check(pairs, feature_dim);
  const auto words = toy_words();
  const std::size_t vocab = words.size() - kClasses;  // the last four letters name the classes
  Tensor prototypes({kClasses, feature_dim});
  for (double& v : prototypes.data()) v = rng.uniform(-1.0, 1.0);

  ToyCorpus c;
  c.features = Tensor({pairs, feature_dim});
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t cls = rng.below(kClasses);
    const std::size_t len = kMinLen + rng.below(kMaxLen - kMinLen + 1);
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < len; ++k) ids.push_back(rng.below(vocab));
    std::vector<std::string> tgt{words[vocab + cls]};
    for (std::size_t id : ids) tgt.push_back(words[(id + 1) % vocab]);
    ids[rng.below(len)] = rng.below(vocab);
    std::vector<std::string> src;
    for (std::size_t id : ids) src.push_back(words[id]);
    c.sources.push_back(join(src));
    c.targets.push_back(join(tgt));
    for (std::size_t j = 0; j < feature_dim; ++j) {
      c.features.at(i, j) = prototypes.at(cls, j) + 0.5 * rng.normal();
    }
  }
  return c;
}

ToySplits encode_toy(const ToyCorpus& corpus, std::size_t valid_pairs) {
  const std::size_t n = corpus.sources.size();
  if (valid_pairs >= n) throw std::invalid_argument("validation split must leave training pairs");
  std::vector<Words> src, tgt;
  for (const auto& s : corpus.sources) src.push_back(split_words(s));
  for (const auto& t : corpus.targets) tgt.push_back(split_words(t));
  ToySplits out;
  out.src_vocab = Vocabulary::build(src);
  out.tgt_vocab = Vocabulary::build(tgt);
  const std::size_t dim = corpus.features.cols();
  auto fill = [&](ParallelData& d, std::size_t begin, std::size_t end) {
    if (begin == end) return;
    d.features = Tensor({end - begin, dim});
    for (std::size_t i = begin; i < end; ++i) {
      d.sources.push_back(out.src_vocab.encode(src[i]));
      d.targets.push_back(out.tgt_vocab.encode(tgt[i]));
      std::copy_n(corpus.features.data().begin() + i * dim, dim, d.features.data().begin() + (i - begin) * dim);
    }
  };
  fill(out.train, 0, n - valid_pairs);
  fill(out.valid, n - valid_pairs, n);
  return out;
}

}  // namespace mmt
