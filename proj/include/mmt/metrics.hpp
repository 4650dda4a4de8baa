// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmt {

using Words = std::vector<std::string>;

Words split_words(std::string_view text);

struct BleuReport {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  /// "BLEU=<x> p=<p1>/<p2>/<p3>/<p4> BP=<bp> ratio=<hyp/ref>"
  std::string to_string() const;
};

/// Corpus BLEU-4 against a single reference per hypothesis, without smoothing.
BleuReport bleu4(std::span<const Words> hypotheses, std::span<const Words> references);

}  // namespace mmt
