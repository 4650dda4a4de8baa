// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmt {

inline constexpr std::string_view kEndOfWord = "</w>";

using SymbolPair = std::pair<std::string, std::string>;

/// Learned byte-pair merges in priority order. Words are split into UTF-8
/// characters followed by a separate end-of-word symbol "</w>"; segmented
/// output attaches that marker to the last subword.
class BpeModel {
 public:
  BpeModel() = default;
  explicit BpeModel(std::vector<SymbolPair> merges, std::vector<std::string> vocabulary = {});

  const std::vector<SymbolPair>& merges() const { return merges_; }
  /// Symbols of the training corpus after all merges, sorted.
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  /// Priority of a pair (lower merges first), or npos if it was never learned.
  std::size_t rank(const std::string& left, const std::string& right) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<SymbolPair> merges_;
  std::vector<std::string> vocabulary_;
  std::map<SymbolPair, std::size_t> ranks_;
};

/// UTF-8 code points of `word` plus the end-of-word symbol.
std::vector<std::string> initial_symbols(std::string_view word);

/// Greedy merge learning over whitespace tokens. Pair frequencies are summed
/// over word types weighted by their counts; equal frequencies go to the
/// lexicographically smallest pair. Stops after `n_merges` or once no pair
/// occurs at least twice.
BpeModel learn_bpe(std::span<const std::string> tokens, std::size_t n_merges);

std::vector<std::string> apply_bpe(std::string_view word, const BpeModel& model);
/// Segments every whitespace-separated word of a line.
std::vector<std::string> apply_bpe_line(std::string_view line, const BpeModel& model);
/// Concatenates subwords, turning end-of-word markers into single spaces; no
/// trailing space is kept.
std::string undo_bpe(std::span<const std::string> subwords);

/// "#bpe-v1 <n>" header then one "left right" merge per line.
void save_bpe(const BpeModel& model, const std::filesystem::path& path);
BpeModel load_bpe(const std::filesystem::path& path);

}  // namespace mmt
