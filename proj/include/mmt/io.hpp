// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmt/bpe.hpp"
#include "mmt/model.hpp"
#include "mmt/trainer.hpp"

namespace mmt {

/// Token list with the four reserved specials at ids 0-3. Stored as one token
/// per line, line number = id.
class Vocabulary {
 public:
  Vocabulary();

  /// Specials followed by corpus tokens by descending frequency, ties in byte order.
  static Vocabulary build(std::span<const std::vector<std::string>> sentences);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  /// Tokens of `ids`, dropping specials other than <unk>.
  std::vector<std::string> decode(std::span<const int> ids) const;
  /// Text for scoring: undoes BPE when the vocabulary holds end-of-word markers,
  /// otherwise joins tokens with spaces.
  std::string detokenize(std::span<const int> ids) const;
  bool has_bpe_markers() const { return bpe_markers_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  bool bpe_markers_ = false;
};

inline constexpr std::string_view kFeatureMagic = "UMFEAT01";
inline constexpr std::string_view kCheckpointMagic = "UMCKPT01";

/// Magic, u32 rows, u32 dim (little-endian), then rows * dim little-endian
/// 32-bit floats. Loaded as doubles.
std::string encode_features(const Tensor& features);
Tensor decode_features(std::string_view bytes, const std::string& origin = "features");
void save_features(const std::filesystem::path& path, const Tensor& features);
Tensor load_features(const std::filesystem::path& path);

/// Serialized model: magic, u32 tensor count, then per tensor u16 name length,
/// name, u8 rank, u32 extents and float64 payload (little-endian). Adam moments
/// follow the weights as "adam/m/<name>", "adam/v/<name>" and "adam/step".
/// The configuration echo closes the file as u32 length + UTF-8 text.
std::string encode_checkpoint(ModelParams& params, const AdamState* adam, std::string_view config_text);
void save_checkpoint(const std::filesystem::path& path, ModelParams& params, const AdamState* adam,
                     std::string_view config_text);

struct LoadedCheckpoint {
  TrainConfig config;
  std::string config_text;
  ModelParams params;
  AdamState adam;
  bool has_adam = false;
};

LoadedCheckpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "checkpoint");
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Aligned source, target and image-feature streams.
struct Corpus {
  ParallelData data;
  std::vector<std::size_t> feature_rows;  // row i of the feature file pairs with line i
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
};

struct CorpusOptions {
  const BpeModel* src_bpe = nullptr;
  const BpeModel* tgt_bpe = nullptr;
  /// Built from the corpus when absent.
  const Vocabulary* src_vocab = nullptr;
  const Vocabulary* tgt_vocab = nullptr;
};

/// Reads one sentence per line, applies BPE and maps tokens to ids. Rejects
/// corpora whose line counts disagree with each other or with the feature rows.
Corpus load_corpus(const std::filesystem::path& src, const std::filesystem::path& tgt,
                   const std::filesystem::path& features, const CorpusOptions& options = {});

/// Whitespace tokens of each line, segmented with `bpe` when given.
std::vector<std::vector<std::string>> tokenize_lines(std::span<const std::string> lines, const BpeModel* bpe);

}  // namespace mmt
