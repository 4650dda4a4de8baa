// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>
#include <stdexcept>

#include "mmt/fileio.hpp"
#include "mmt/metrics.hpp"

namespace mmt {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials{"<bos>", "<eos>", "<pad>", "<unk>"};
  return specials;
}

}  // namespace

Vocabulary::Vocabulary() : tokens_(special_tokens()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special_tokens();
  if (tokens.empty()) tokens = specials;
  if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw std::invalid_argument("vocabulary must start with <bos>, <eos>, <pad>, <unk>");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  v.bpe_markers_ = false;
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (v.tokens_[i].empty()) throw std::invalid_argument("empty token at vocabulary id " + std::to_string(i));
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
    if (i >= specials.size() && v.tokens_[i].ends_with(kEndOfWord)) v.bpe_markers_ = true;
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> sentences) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences) {
    for (const auto& t : s) ++counts[t];
  }
  for (const auto& sp : special_tokens()) counts.erase(sp);
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = special_tokens();
  for (auto& [t, c] : ordered) tokens.push_back(t);
  return from_tokens(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kBos || id == kEos || id == kPad) continue;
    out.push_back(token(id));
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  const auto toks = decode(ids);
  if (bpe_markers_) return undo_bpe(toks);
  std::string s;
  for (const auto& t : toks) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string text;
  for (const auto& t : tokens_) text += t + '\n';
  write_file_atomic(path, text);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  try {
    return from_tokens(read_lines(path));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

namespace {

class ByteWriter {
 public:
  void raw(std::string_view s) { out_.append(s); }
  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw std::runtime_error(origin_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace

std::string encode_features(const Tensor& features) {
  if (features.rank() != 2) throw std::invalid_argument("feature matrix must be 2-D");
  ByteWriter w;
  w.raw(kFeatureMagic);
  w.le(static_cast<std::uint32_t>(features.rows()));
  w.le(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) w.f32(static_cast<float>(v));
  return w.take();
}

Tensor decode_features(std::string_view bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.raw(8) != kFeatureMagic) r.fail("not a feature file (bad magic)");
  const auto rows = r.le<std::uint32_t>();
  const auto dim = r.le<std::uint32_t>();
  if (rows == 0 || dim == 0) r.fail("feature file must have positive rows and dim");
  const std::uint64_t expected = static_cast<std::uint64_t>(rows) * dim * 4;
  if (r.remaining() != expected) {
    r.fail("payload is " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(expected));
  }
  Tensor t({rows, dim});
  for (double& v : t.data()) v = static_cast<double>(r.f32());
  return t;
}

void save_features(const std::filesystem::path& path, const Tensor& features) {
  write_file_atomic(path, encode_features(features));
}

Tensor load_features(const std::filesystem::path& path) { return decode_features(read_file(path), path.string()); }

namespace {

void write_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  if (name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long: " + name);
  w.le(static_cast<std::uint16_t>(name.size()));
  w.raw(name);
  w.le(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) w.le(static_cast<std::uint32_t>(e));
  for (double v : t.data()) w.f64(v);
}

}  // namespace

std::string encode_checkpoint(ModelParams& params, const AdamState* adam, std::string_view config_text) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  params.visit([&](Parameter& p) { tensors.emplace_back(p.name, &p.value); });
  Tensor step;
  if (adam) {
    params.visit([&](Parameter& p) {
      auto m = adam->first_moment.find(p.name);
      auto v = adam->second_moment.find(p.name);
      if (m != adam->first_moment.end() && v != adam->second_moment.end()) {
        tensors.emplace_back("adam/m/" + p.name, &m->second);
        tensors.emplace_back("adam/v/" + p.name, &v->second);
      }
    });
    step = Tensor({1}, std::vector<double>{static_cast<double>(adam->step)});
    tensors.emplace_back("adam/step", &step);
  }
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) write_tensor(w, name, *t);
  w.le(static_cast<std::uint32_t>(config_text.size()));
  w.raw(config_text);
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, ModelParams& params, const AdamState* adam,
                     std::string_view config_text) {
  write_file_atomic(path, encode_checkpoint(params, adam, config_text));
}

LoadedCheckpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.raw(8) != kCheckpointMagic) r.fail("not a checkpoint or unsupported version (bad magic)");
  const auto count = r.le<std::uint32_t>();
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint16_t>();
    std::string name(r.raw(name_len));
    const auto rank = r.le<std::uint8_t>();
    Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) {
      shape.push_back(r.le<std::uint32_t>());
      if (shape.back() == 0) r.fail("tensor '" + name + "' has a zero extent");
    }
    const std::size_t n = element_count(shape);
    if (r.remaining() < n * 8) r.fail("truncated payload of tensor '" + name + "'");
    std::vector<double> data(n);
    for (double& v : data) v = r.f64();
    tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const auto cfg_len = r.le<std::uint32_t>();
  LoadedCheckpoint out;
  out.config_text = std::string(r.raw(cfg_len));
  if (r.remaining() != 0) r.fail("trailing bytes after configuration echo");
  try {
    out.config = TrainConfig::from_text(out.config_text);
    out.params = ModelParams(out.config.model_config());
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("bad configuration echo: ") + e.what());
  }

  std::map<std::string, bool> seen;
  out.params.visit([&](Parameter& p) { seen[p.name] = false; });
  for (auto& [name, t] : tensors) {
    if (name == "adam/step") {
      out.adam.step = static_cast<std::uint64_t>(t[0]);
      out.has_adam = true;
      continue;
    }
    if (name.rfind("adam/m/", 0) == 0 || name.rfind("adam/v/", 0) == 0) {
      const std::string base = name.substr(7);
      if (!seen.count(base)) r.fail("optimizer state for unknown tensor '" + base + "'");
      (name[5] == 'm' ? out.adam.first_moment : out.adam.second_moment)[base] = std::move(t);
      continue;
    }
    Parameter* p = out.params.find(name);
    if (p == nullptr) r.fail("unknown tensor '" + name + "'");
    if (p->value.shape() != t.shape()) {
      r.fail("tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
             shape_string(p->value.shape()));
    }
    p->value = std::move(t);
    p->zero_grad();
    seen[name] = true;
  }
  for (const auto& [name, ok] : seen) {
    if (!ok) r.fail("missing tensor '" + name + "'");
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

std::vector<std::vector<std::string>> tokenize_lines(std::span<const std::string> lines, const BpeModel* bpe) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(bpe ? apply_bpe_line(line, *bpe) : split_words(line));
  return out;
}

Corpus load_corpus(const std::filesystem::path& src, const std::filesystem::path& tgt,
                   const std::filesystem::path& features, const CorpusOptions& options) {
  const auto src_lines = read_lines(src);
  const auto tgt_lines = read_lines(tgt);
  Tensor feats = load_features(features);
  if (tgt_lines.size() != src_lines.size()) {
    throw std::runtime_error(tgt.string() + ": has " + std::to_string(tgt_lines.size()) + " lines but " +
                             src.string() + " has " + std::to_string(src_lines.size()));
  }
  if (feats.rows() != src_lines.size()) {
    throw std::runtime_error(features.string() + ": has " + std::to_string(feats.rows()) + " rows but " +
                             src.string() + " has " + std::to_string(src_lines.size()) + " lines");
  }
  const auto src_tok = tokenize_lines(src_lines, options.src_bpe);
  const auto tgt_tok = tokenize_lines(tgt_lines, options.tgt_bpe);
  for (std::size_t i = 0; i < src_tok.size(); ++i) {
    if (src_tok[i].empty()) throw std::runtime_error(src.string() + ":" + std::to_string(i + 1) + ": empty sentence");
  }

  Corpus c;
  c.src_vocab = options.src_vocab ? *options.src_vocab : Vocabulary::build(src_tok);
  c.tgt_vocab = options.tgt_vocab ? *options.tgt_vocab : Vocabulary::build(tgt_tok);
  for (std::size_t i = 0; i < src_tok.size(); ++i) {
    c.data.sources.push_back(c.src_vocab.encode(src_tok[i]));
    c.data.targets.push_back(c.tgt_vocab.encode(tgt_tok[i]));
    c.feature_rows.push_back(i);
  }
  c.data.features = std::move(feats);
  return c;
}

}  // namespace mmt
