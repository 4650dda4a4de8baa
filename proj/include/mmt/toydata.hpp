// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmt/io.hpp"
#include "mmt/random.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

/// Synthetic parallel text with one feature row per pair.
struct ToyCorpus {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  Tensor features;  // [pairs x feature_dim]
};

/// The 26 single-letter words "a" .. "z".
std::vector<std::string> toy_words();

/// Identity copy: target == source, 3 to 8 words, features uniform on [-1, 1].
ToyCorpus make_copy_task(std::size_t pairs, std::size_t feature_dim, Rng& rng);

/// Image-dependent translation. Each pair draws one of four classes; its
/// features are the class prototype plus noise. The target opens with the
/// class word and continues with the source words shifted by one letter, while
/// the source hides the class and has one word replaced at random.
ToyCorpus make_noisy_task(std::size_t pairs, std::size_t feature_dim, Rng& rng);

/// Token ids of a toy corpus with vocabularies built from all of its pairs.
/// The last `valid_pairs` pairs form the validation split.
struct ToySplits {
  ParallelData train;
  ParallelData valid;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
};

ToySplits encode_toy(const ToyCorpus& corpus, std::size_t valid_pairs);

}  // namespace mmt
