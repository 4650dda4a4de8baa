// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>

#include "doctest.h"
#include "mmt/fileio.hpp"
#include "mmt/io.hpp"
#include "test_support.hpp"

using namespace mmt;

namespace {

struct Fixture {
  TrainConfig config;
  ModelParams params;
  AdamState adam;
};

Fixture trained_fixture(Variant v) {
  Fixture f;
  f.config.variant = v;
  f.config.use_desk_dims();
  f.config.src_vocab = 11;
  f.config.tgt_vocab = 9;
  f.params = ModelParams(f.config.model_config());
  Rng rng(21);
  f.params.visit([&](Parameter& p) {
    mmt::testing::randomize(p, rng);
    p.grad = mmt::testing::random_tensor(p.value.shape(), rng);
  });
  auto list = f.params.parameters();
  adam_step(list, f.adam, f.config.adam);
  adam_step(list, f.adam, f.config.adam);
  return f;
}

std::string expect_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  FAIL("expected an exception");
  return {};
}

}  // namespace

TEST_CASE("feature file header bytes") {
  const Tensor f({2, 3}, {1.0, -2.0, 0.5, 0.0, 3.0, 0.25});
  const std::string bytes = encode_features(f);
  REQUIRE(bytes.size() == 8 + 4 + 4 + 6 * 4);
  CHECK(bytes.substr(0, 8) == "UMFEAT01");
  const unsigned char header[] = {2, 0, 0, 0, 3, 0, 0, 0};
  CHECK(std::memcmp(bytes.data() + 8, header, 8) == 0);
  // 1.0f and -2.0f in little-endian IEEE 754.
  const unsigned char first[] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  CHECK(std::memcmp(bytes.data() + 16, first, 8) == 0);
  CHECK(decode_features(bytes) == f);
}

TEST_CASE("feature decoding rejects malformed files") {
  const std::string good = encode_features(Tensor({1, 2}, {1.0, 2.0}));
  CHECK_THROWS_AS(decode_features(good.substr(0, good.size() - 1)), std::runtime_error);
  CHECK_THROWS_AS(decode_features(good + "x"), std::runtime_error);
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_features(bad), std::runtime_error);
  CHECK_THROWS_AS(decode_features("UMFEAT01"), std::runtime_error);
}

TEST_CASE("checkpoint round trip is byte identical") {
  for (Variant v : {Variant::kBaseline, Variant::kDeepGru}) {
    Fixture f = trained_fixture(v);
    const std::string text = f.config.to_text();
    const std::string bytes = encode_checkpoint(f.params, &f.adam, text);
    LoadedCheckpoint back = decode_checkpoint(bytes);
    CHECK(back.has_adam);
    CHECK(back.adam.step == 2);
    CHECK(back.config_text == text);
    CHECK(back.config.variant == v);
    CHECK(encode_checkpoint(back.params, &back.adam, back.config_text) == bytes);
    auto a = f.params.parameters();
    auto b = back.params.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

    const std::string plain = encode_checkpoint(f.params, nullptr, text);
    CHECK_FALSE(decode_checkpoint(plain).has_adam);
    CHECK(plain.size() < bytes.size());

    const auto dir = mmt::testing::scratch_dir("ckpt");
    save_checkpoint(dir / "m.bin", f.params, &f.adam, text);
    CHECK(read_file(dir / "m.bin") == bytes);
    CHECK(load_checkpoint(dir / "m.bin").params.parameter_count() == f.params.parameter_count());
  }
}

TEST_CASE("tied output projection is not stored separately") {
  Fixture f = trained_fixture(Variant::kBaseline);
  const std::size_t V = f.config.tgt_vocab, d = f.config.emb_dim;
  std::size_t tables = 0, projections = 0;
  f.params.visit([&](Parameter& p) {
    if (p.value.shape() == Shape{V, d}) ++tables;
    if (p.value.shape() == Shape{d, V}) ++projections;
  });
  CHECK(tables == 1);
  CHECK(projections == 0);
  const Tensor tied = f.params.tied_projection();
  CHECK(tied.rows() == d);
  CHECK(tied.cols() == V);
  CHECK(tied.at(2, 5) == f.params.tgt_embedding.table.value.at(5, 2));
}

TEST_CASE("checkpoint decoding rejects corrupt files") {
  Fixture f = trained_fixture(Variant::kDeepGru);
  const std::string text = f.config.to_text();
  const std::string bytes = encode_checkpoint(f.params, &f.adam, text);

  CHECK(expect_error([&] { decode_checkpoint(bytes.substr(0, bytes.size() / 2)); }).find("truncated") !=
        std::string::npos);
  CHECK_THROWS_AS(decode_checkpoint(bytes + '\0'), std::runtime_error);
  std::string magic = bytes;
  magic[7] = '2';
  CHECK(expect_error([&] { decode_checkpoint(magic); }).find("magic") != std::string::npos);

  // Weights of a DeepGRU model under a baseline configuration.
  TrainConfig baseline = f.config;
  baseline.variant = Variant::kBaseline;
  CHECK(expect_error([&] { decode_checkpoint(encode_checkpoint(f.params, nullptr, baseline.to_text())); })
            .find("unknown tensor") != std::string::npos);

  TrainConfig wider = f.config;
  wider.hidden_dim = 17;
  CHECK(expect_error([&] { decode_checkpoint(encode_checkpoint(f.params, nullptr, wider.to_text())); })
            .find("shape") != std::string::npos);

  // A baseline model decoded as DeepGRU is missing tensors.
  Fixture b = trained_fixture(Variant::kBaseline);
  const std::string as_deep = encode_checkpoint(b.params, nullptr, f.config.to_text());
  CHECK_THROWS_AS(decode_checkpoint(as_deep), std::runtime_error);

  CHECK(expect_error([&] { decode_checkpoint(encode_checkpoint(f.params, nullptr, "bogus = 1\n")); })
            .find("configuration") != std::string::npos);
}

TEST_CASE("vocabulary construction and files") {
  const Vocabulary empty;
  CHECK(empty.size() == 4);
  CHECK(empty.token(kBos) == "<bos>");
  CHECK(empty.token(kEos) == "<eos>");
  CHECK(empty.token(kPad) == "<pad>");
  CHECK(empty.token(kUnk) == "<unk>");

  const std::vector<std::vector<std::string>> sents{{"b", "a", "c"}, {"c", "a"}, {"c"}};
  const Vocabulary v = Vocabulary::build(sents);
  CHECK(v.tokens() == std::vector<std::string>{"<bos>", "<eos>", "<pad>", "<unk>", "c", "a", "b"});
  CHECK(v.id("zzz") == kUnk);
  const std::vector<std::string> words{"a", "zzz"};
  CHECK(v.encode(words) == std::vector<int>{5, kUnk});
  const std::vector<int> ids{kBos, 4, 5, kEos, kPad};
  CHECK(v.decode(ids) == std::vector<std::string>{"c", "a"});
  CHECK(v.detokenize(ids) == "c a");
  CHECK_THROWS_AS(v.token(7), std::out_of_range);

  const auto dir = mmt::testing::scratch_dir("vocab");
  v.save(dir / "v.txt");
  CHECK(Vocabulary::load(dir / "v.txt").tokens() == v.tokens());
  write_file_atomic(dir / "nospecials", "a\nb\n");
  CHECK_THROWS(Vocabulary::load(dir / "nospecials"));
  write_file_atomic(dir / "dup", "<bos>\n<eos>\n<pad>\n<unk>\nx\nx\n");
  CHECK_THROWS(Vocabulary::load(dir / "dup"));

  const Vocabulary bpe = Vocabulary::from_tokens({"<bos>", "<eos>", "<pad>", "<unk>", "lo", "w</w>", "ab</w>"});
  CHECK(bpe.has_bpe_markers());
  const std::vector<int> pieces{4, 5, 6};
  CHECK(bpe.detokenize(pieces) == "low ab");
}

TEST_CASE("corpus loading aligns text and features") {
  const auto dir = mmt::testing::scratch_dir("corpus");
  write_file_atomic(dir / "s", "a b\nc\nb a c\n");
  write_file_atomic(dir / "t", "x\ny y\nz\n");
  save_features(dir / "f3", Tensor({3, 4}, 0.5));
  save_features(dir / "f2", Tensor({2, 4}, 0.5));

  const Corpus c = load_corpus(dir / "s", dir / "t", dir / "f3");
  CHECK(c.data.size() == 3);
  CHECK(c.data.features.cols() == 4);
  CHECK(c.src_vocab.decode(c.data.sources[2]) == std::vector<std::string>{"b", "a", "c"});
  CHECK(c.tgt_vocab.decode(c.data.targets[1]) == std::vector<std::string>{"y", "y"});

  const std::string rows = expect_error([&] { load_corpus(dir / "s", dir / "t", dir / "f2"); });
  CHECK(rows.find((dir / "f2").string()) != std::string::npos);

  write_file_atomic(dir / "t2", "x\ny\n");
  const std::string lines = expect_error([&] { load_corpus(dir / "s", dir / "t2", dir / "f3"); });
  CHECK(lines.find((dir / "t2").string()) != std::string::npos);

  write_file_atomic(dir / "blank", "a\n\nb\n");
  CHECK_THROWS_AS(load_corpus(dir / "blank", dir / "t", dir / "f3"), std::runtime_error);

  // Fixed vocabularies map unseen words to <unk>.
  const Vocabulary fixed = Vocabulary::from_tokens({"<bos>", "<eos>", "<pad>", "<unk>", "a"});
  CorpusOptions opts;
  opts.src_vocab = &fixed;
  const Corpus d = load_corpus(dir / "s", dir / "t", dir / "f3", opts);
  CHECK(d.data.sources[0] == std::vector<int>{4, kUnk});
}
