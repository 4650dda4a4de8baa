// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/bpe.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

#include "mmt/fileio.hpp"
#include "mmt/metrics.hpp"

namespace mmt {

BpeModel::BpeModel(std::vector<SymbolPair> merges, std::vector<std::string> vocabulary)
    : merges_(std::move(merges)), vocabulary_(std::move(vocabulary)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    if (!ranks_.emplace(merges_[i], i).second) {
      throw std::invalid_argument("duplicate BPE merge '" + merges_[i].first + " " + merges_[i].second + "'");
    }
  }
}

std::size_t BpeModel::rank(const std::string& left, const std::string& right) const {
  auto it = ranks_.find({left, right});
  return it == ranks_.end() ? npos : it->second;
}

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  out.emplace_back(kEndOfWord);
  return out;
}

namespace {

// Replaces every non-overlapping occurrence of (left, right), scanning left to right.
void merge_pair(std::vector<std::string>& symbols, const SymbolPair& pair) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(pair.first + pair.second);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

}  // namespace

BpeModel learn_bpe(std::span<const std::string> tokens, std::size_t n_merges) {
  std::map<std::string, std::size_t> type_counts;
  for (const auto& t : tokens) {
    if (!t.empty()) ++type_counts[t];
  }
  if (type_counts.empty()) throw std::invalid_argument("learn_bpe: empty corpus");

  struct WordType {
    std::vector<std::string> symbols;
    std::size_t count;
  };
  std::vector<WordType> words;
  for (const auto& [w, c] : type_counts) words.push_back({initial_symbols(w), c});

  std::vector<SymbolPair> merges;
  while (merges.size() < n_merges) {
    std::map<SymbolPair, std::size_t> freq;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) freq[{w.symbols[i], w.symbols[i + 1]}] += w.count;
    }
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    const SymbolPair* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, count] : freq) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr || best_count < 2) break;
    const SymbolPair chosen = *best;
    for (auto& w : words) merge_pair(w.symbols, chosen);
    merges.push_back(chosen);
  }

  std::set<std::string> vocab;
  for (const auto& w : words) vocab.insert(w.symbols.begin(), w.symbols.end());
  return BpeModel(std::move(merges), std::vector<std::string>(vocab.begin(), vocab.end()));
}

std::vector<std::string> apply_bpe(std::string_view word, const BpeModel& model) {
  if (word.empty()) return {};
  std::vector<std::string> symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = BpeModel::npos;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) best_rank = std::min(best_rank, model.rank(symbols[i], symbols[i + 1]));
    if (best_rank == BpeModel::npos) break;
    merge_pair(symbols, model.merges()[best_rank]);
  }
  if (symbols.size() > 1 && symbols.back() == kEndOfWord) {
    symbols.pop_back();
    symbols.back() += kEndOfWord;
  }
  return symbols;
}

std::vector<std::string> apply_bpe_line(std::string_view line, const BpeModel& model) {
  std::vector<std::string> out;
  for (const auto& w : split_words(line)) {
    auto pieces = apply_bpe(w, model);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::string undo_bpe(std::span<const std::string> subwords) {
  std::string text;
  for (const auto& s : subwords) text += s;
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, kEndOfWord.size(), kEndOfWord) == 0) {
      out.push_back(' ');
      i += kEndOfWord.size();
    } else {
      out.push_back(text[i++]);
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void save_bpe(const BpeModel& model, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "#bpe-v1 " << model.merges().size() << '\n';
  for (const auto& [l, r] : model.merges()) os << l << ' ' << r << '\n';
  write_file_atomic(path, os.str());
}

BpeModel load_bpe(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0].rfind("#bpe-v1 ", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing '#bpe-v1' header");
  }
  std::size_t declared = 0;
  try {
    declared = std::stoul(lines[0].substr(8));
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed merge count in header");
  }
  std::vector<SymbolPair> merges;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size() || line.find(' ', space + 1) != std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) + ": expected two symbols");
    }
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  if (merges.size() != declared) {
    throw std::runtime_error(path.string() + ": header declares " + std::to_string(declared) + " merges, found " +
                             std::to_string(merges.size()));
  }
  return BpeModel(std::move(merges));
}

}  // namespace mmt
