// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmt/bpe.hpp"
#include "mmt/fileio.hpp"
#include "mmt/gradcheck.hpp"
#include "mmt/io.hpp"
#include "mmt/metrics.hpp"
#include "mmt/search.hpp"
#include "mmt/toydata.hpp"
#include "mmt/trainer.hpp"

namespace mmt {

namespace fs = std::filesystem;

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + '\n';
  return s;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

struct LearnBpeArgs {
  std::vector<std::string> inputs;
  std::size_t merges = 10000;
  std::string output;
};

void learn_bpe_cmd(const LearnBpeArgs& a, std::ostream& out) {
  std::vector<std::string> tokens;
  for (const auto& path : a.inputs) {
    for (const auto& line : read_lines(path)) {
      auto words = split_words(line);
      tokens.insert(tokens.end(), words.begin(), words.end());
    }
  }
  const BpeModel model = learn_bpe(tokens, a.merges);
  save_bpe(model, a.output);
  out << "merges=" << model.merges().size() << " symbols=" << model.vocabulary().size() << '\n';
}

struct ApplyBpeArgs {
  std::string codes, input, output;
};

void apply_bpe_cmd(const ApplyBpeArgs& a) {
  const BpeModel model = load_bpe(a.codes);
  std::vector<std::string> lines;
  for (const auto& line : read_lines(a.input)) lines.push_back(join_words(apply_bpe_line(line, model)));
  write_file_atomic(a.output, join_lines(lines));
}

struct BuildVocabArgs {
  std::vector<std::string> inputs;
  std::string output;
};

void build_vocab_cmd(const BuildVocabArgs& a, std::ostream& out) {
  std::vector<std::vector<std::string>> sentences;
  for (const auto& path : a.inputs) {
    for (const auto& line : read_lines(path)) sentences.push_back(split_words(line));
  }
  const Vocabulary vocab = Vocabulary::build(sentences);
  vocab.save(a.output);
  out << "tokens=" << vocab.size() << '\n';
}

struct TrainArgs {
  std::string src, tgt, features;
  std::string valid_src, valid_tgt, valid_features;
  std::string src_vocab, tgt_vocab;
  std::string config;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_updates;
  bool desk = false;
  std::string output;
  std::string log;
};

void train_cmd(const TrainArgs& a, std::ostream& out) {
  TrainConfig config;
  if (a.desk) config.use_desk_dims();
  if (!a.config.empty()) config.merge_text(read_file(a.config));
  if (!a.variant.empty()) config.variant = parse_variant(a.variant);
  if (a.seed) config.seed = *a.seed;
  if (a.max_updates) config.max_updates = *a.max_updates;

  const Vocabulary src_vocab = Vocabulary::load(a.src_vocab);
  const Vocabulary tgt_vocab = Vocabulary::load(a.tgt_vocab);
  config.src_vocab = src_vocab.size();
  config.tgt_vocab = tgt_vocab.size();
  config.validate();

  CorpusOptions options;
  options.src_vocab = &src_vocab;
  options.tgt_vocab = &tgt_vocab;
  const Corpus train_corpus = load_corpus(a.src, a.tgt, a.features, options);
  std::optional<Corpus> valid_corpus;
  if (!a.valid_src.empty()) valid_corpus = load_corpus(a.valid_src, a.valid_tgt, a.valid_features, options);
  const ParallelData& valid = valid_corpus ? valid_corpus->data : train_corpus.data;
  for (const ParallelData* d : {&train_corpus.data, &valid}) {
    if (d->features.cols() != config.feature_dim) {
      throw std::runtime_error("feature dimension " + std::to_string(d->features.cols()) + " does not match feature_dim " +
                               std::to_string(config.feature_dim));
    }
  }

  const std::string config_text = config.to_text();
  std::vector<std::string> log_lines;
  bool saved = false;
  TrainHooks hooks;
  hooks.detokenize = [&](std::span<const int> ids) { return tgt_vocab.detokenize(ids); };
  hooks.on_log = [&](const LogEntry& e) {
    log_lines.push_back(format_log_line(e));
    if (!a.log.empty()) write_file_atomic(a.log, join_lines(log_lines));
    out << log_lines.back() << '\n';
  };
  hooks.on_improvement = [&](const ModelParams& params, const AdamState& adam, const LogEntry&) {
    ModelParams copy = params;
    save_checkpoint(a.output, copy, &adam, config_text);
    saved = true;
  };
  TrainResult result = train(config, train_corpus.data, valid, hooks);
  if (!saved) save_checkpoint(a.output, result.best, nullptr, config_text);
  if (!a.log.empty()) write_file_atomic(a.log, join_lines(log_lines));
  const double final_loss = result.batch_losses.empty() ? 0.0 : result.batch_losses.back();
  char buf[160];
  std::snprintf(buf, sizeof buf, "updates=%zu evaluations=%zu best_bleu=%.6f last_loss=%.6f%s", result.updates,
                result.evaluations, result.best_metric, final_loss, result.early_stopped ? " early_stopped" : "");
  out << buf << '\n';
}

struct TranslateArgs {
  std::vector<std::string> models;
  std::string src_vocab, tgt_vocab;
  std::string codes;
  std::string input, features, output;
  std::size_t beam = 12;
  std::size_t max_len = 0;
  bool geometric = false;
};

void translate_cmd(const TranslateArgs& a) {
  std::vector<LoadedCheckpoint> loaded;
  for (const auto& path : a.models) loaded.push_back(load_checkpoint(path));
  const Vocabulary src_vocab = Vocabulary::load(a.src_vocab);
  const Vocabulary tgt_vocab = Vocabulary::load(a.tgt_vocab);
  std::vector<ModelParams*> models;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const ModelConfig& c = loaded[i].params.config;
    if (c.tgt_vocab != tgt_vocab.size() || c.src_vocab != src_vocab.size()) {
      throw std::runtime_error(a.models[i] + ": vocabulary sizes " + std::to_string(c.src_vocab) + "/" +
                               std::to_string(c.tgt_vocab) + " do not match the vocabulary files " +
                               std::to_string(src_vocab.size()) + "/" + std::to_string(tgt_vocab.size()));
    }
    if (c.feature_dim != loaded.front().params.config.feature_dim) {
      throw std::runtime_error(a.models[i] + ": feature dimension differs from the first model");
    }
    models.push_back(&loaded[i].params);
  }
  std::optional<BpeModel> bpe;
  if (!a.codes.empty()) bpe = load_bpe(a.codes);

  const auto lines = read_lines(a.input);
  const Tensor features = load_features(a.features);
  if (features.rows() != lines.size()) {
    throw std::runtime_error(a.features + ": has " + std::to_string(features.rows()) + " rows but " + a.input +
                             " has " + std::to_string(lines.size()) + " lines");
  }
  if (features.cols() != models.front()->config.feature_dim) {
    throw std::runtime_error(a.features + ": feature dimension " + std::to_string(features.cols()) +
                             " does not match the model's " + std::to_string(models.front()->config.feature_dim));
  }
  const auto tokenized = tokenize_lines(lines, bpe ? &*bpe : nullptr);
  std::vector<std::string> output;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto ids = src_vocab.encode(tokenized[i]);
    if (ids.empty()) {
      output.emplace_back();
      continue;
    }
    Tensor row({1, features.cols()});
    std::copy_n(features.data().begin() + i * features.cols(), features.cols(), row.data().begin());
    SearchOptions options;
    options.beam = a.beam;
    options.max_len = a.max_len > 0 ? a.max_len : 2 * ids.size() + 5;
    const auto result = translate(models, ids, row, options,
                                  a.geometric ? EnsembleRule::kGeometric : EnsembleRule::kArithmetic);
    output.push_back(tgt_vocab.detokenize(result.tokens));
  }
  write_file_atomic(a.output, join_lines(output));
}

struct ScoreArgs {
  std::string hyp, ref;
};

void score_cmd(const ScoreArgs& a, std::ostream& out) {
  std::vector<Words> hyps, refs;
  for (const auto& l : read_lines(a.hyp)) hyps.push_back(split_words(l));
  for (const auto& l : read_lines(a.ref)) refs.push_back(split_words(l));
  if (hyps.size() != refs.size()) {
    throw std::runtime_error(a.hyp + ": has " + std::to_string(hyps.size()) + " lines but " + a.ref + " has " +
                             std::to_string(refs.size()));
  }
  out << bleu4(hyps, refs).to_string() << '\n';
}

struct GradcheckArgs {
  std::string variant;
  std::uint64_t seed = 1;
  bool no_biases = false;
};

bool gradcheck_cmd(const GradcheckArgs& a, std::ostream& out) {
  std::vector<Variant> variants{Variant::kBaseline, Variant::kDeepGru};
  if (!a.variant.empty()) variants = {parse_variant(a.variant)};
  bool ok = true;
  for (Variant v : variants) {
    ModelConfig config = ModelConfig::desk(v, 20, 24);
    config.biases = !a.no_biases;
    const GradCheckReport report = check_model_gradients(config, a.seed);
    for (const auto& p : report.parameters) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s\t%s\t%.3e", std::string(variant_name(v)).c_str(), p.name.c_str(),
                    p.max_relative_error);
      out << buf << '\n';
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s max_relative_error=%.3e %s", std::string(variant_name(v)).c_str(),
                  report.max_relative_error, report.passed ? "PASS" : "FAIL");
    out << buf << '\n';
    ok = ok && report.passed;
  }
  return ok;
}

struct ToyArgs {
  std::string task = "copy";
  std::optional<std::size_t> pairs;
  std::optional<std::size_t> valid;
  std::size_t feature_dim = 32;
  std::uint64_t seed = 1;
  std::string output_dir;
};

void write_split(const fs::path& dir, const std::string& name, const ToyCorpus& c, std::size_t begin,
                 std::size_t end) {
  std::vector<std::string> src(c.sources.begin() + begin, c.sources.begin() + end);
  std::vector<std::string> tgt(c.targets.begin() + begin, c.targets.begin() + end);
  Tensor feats({end - begin, c.features.cols()});
  std::copy_n(c.features.data().begin() + begin * c.features.cols(), feats.size(), feats.data().begin());
  write_file_atomic(dir / (name + ".src"), join_lines(src));
  write_file_atomic(dir / (name + ".tgt"), join_lines(tgt));
  save_features(dir / (name + ".feat"), feats);
}

void toy_cmd(const ToyArgs& a, std::ostream& out) {
  const bool copy = a.task == "copy";
  if (!copy && a.task != "noisy") throw std::invalid_argument("unknown task '" + a.task + "' (expected copy or noisy)");
  const std::size_t pairs = a.pairs.value_or(copy ? 200 : 1000);
  const std::size_t valid = a.valid.value_or(copy ? 0 : 50);
  if (valid >= pairs) throw std::invalid_argument("--valid must be smaller than --pairs");
  Rng rng(a.seed);
  const ToyCorpus c = copy ? make_copy_task(pairs, a.feature_dim, rng) : make_noisy_task(pairs, a.feature_dim, rng);
  const fs::path dir(a.output_dir);
  fs::create_directories(dir);
  write_split(dir, "train", c, 0, pairs - valid);
  if (valid > 0) write_split(dir, "valid", c, pairs - valid, pairs);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& s : c.sources) sentences.push_back(split_words(s));
  Vocabulary::build(sentences).save(dir / "src.vocab");
  sentences.clear();
  for (const auto& s : c.targets) sentences.push_back(split_words(s));
  Vocabulary::build(sentences).save(dir / "tgt.vocab");
  out << "train=" << pairs - valid << " valid=" << valid << " dir=" << dir.string() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal neural machine translation toolkit", "mmt"};
  app.require_subcommand(1);

  LearnBpeArgs lb;
  auto* learn = app.add_subcommand("learn-bpe", "Learn byte-pair merges from whitespace-tokenized text");
  learn->add_option("--input", lb.inputs, "Training text (repeatable)")->required()->check(CLI::ExistingFile);
  learn->add_option("--merges", lb.merges, "Number of merges")->capture_default_str();
  learn->add_option("--output", lb.output, "Merge file")->required();

  ApplyBpeArgs ab;
  auto* apply = app.add_subcommand("apply-bpe", "Segment text with learned merges");
  apply->add_option("--codes", ab.codes, "Merge file")->required()->check(CLI::ExistingFile);
  apply->add_option("--input", ab.input)->required()->check(CLI::ExistingFile);
  apply->add_option("--output", ab.output)->required();

  BuildVocabArgs bv;
  auto* vocab = app.add_subcommand("build-vocab", "Build a vocabulary file from tokenized text");
  vocab->add_option("--input", bv.inputs, "Text (repeatable)")->required()->check(CLI::ExistingFile);
  vocab->add_option("--output", bv.output)->required();

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train a model");
  trainc->add_option("--src", tr.src)->required()->check(CLI::ExistingFile);
  trainc->add_option("--tgt", tr.tgt)->required()->check(CLI::ExistingFile);
  trainc->add_option("--features", tr.features)->required()->check(CLI::ExistingFile);
  auto* vsrc = trainc->add_option("--valid-src", tr.valid_src, "Validation source (defaults to the training set)")
                   ->check(CLI::ExistingFile);
  auto* vtgt = trainc->add_option("--valid-tgt", tr.valid_tgt)->check(CLI::ExistingFile);
  auto* vfeat = trainc->add_option("--valid-features", tr.valid_features)->check(CLI::ExistingFile);
  vsrc->needs(vtgt, vfeat);
  vtgt->needs(vsrc);
  vfeat->needs(vsrc);
  trainc->add_option("--src-vocab", tr.src_vocab)->required()->check(CLI::ExistingFile);
  trainc->add_option("--tgt-vocab", tr.tgt_vocab)->required()->check(CLI::ExistingFile);
  trainc->add_option("--config", tr.config, "key = value configuration file")->check(CLI::ExistingFile);
  trainc->add_option("--variant", tr.variant)->check(CLI::IsMember({"baseline", "deepgru"}));
  trainc->add_option("--seed", tr.seed, "Overrides the configured seed");
  trainc->add_option("--max-updates", tr.max_updates);
  trainc->add_flag("--desk", tr.desk, "Small dimensions (d=8, S=16, feature dim 32) before applying --config");
  trainc->add_option("--output", tr.output, "Checkpoint path")->required();
  trainc->add_option("--log", tr.log, "Training log path");

  TranslateArgs tl;
  auto* trans = app.add_subcommand("translate", "Decode with one model or an ensemble");
  trans->add_option("--model", tl.models, "Checkpoint (repeat to ensemble)")->required()->check(CLI::ExistingFile);
  trans->add_option("--src-vocab", tl.src_vocab)->required()->check(CLI::ExistingFile);
  trans->add_option("--tgt-vocab", tl.tgt_vocab)->required()->check(CLI::ExistingFile);
  trans->add_option("--codes", tl.codes, "Source merge file applied before lookup")->check(CLI::ExistingFile);
  trans->add_option("--input", tl.input)->required()->check(CLI::ExistingFile);
  trans->add_option("--features", tl.features)->required()->check(CLI::ExistingFile);
  trans->add_option("--output", tl.output)->required();
  trans->add_option("--beam", tl.beam)->capture_default_str()->check(CLI::PositiveNumber);
  trans->add_option("--max-len", tl.max_len, "Emitted tokens per sentence (default 2 * source length + 5)");
  trans->add_flag("--geometric", tl.geometric, "Geometric instead of arithmetic ensemble mean");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Corpus BLEU-4 of hypotheses against references");
  score->add_option("--hyp", sc.hyp)->required()->check(CLI::ExistingFile);
  score->add_option("--ref", sc.ref)->required()->check(CLI::ExistingFile);

  GradcheckArgs gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of both decoders at small dimensions");
  grad->add_option("--variant", gc.variant)->check(CLI::IsMember({"baseline", "deepgru"}));
  grad->add_option("--seed", gc.seed)->capture_default_str();
  grad->add_flag("--no-biases", gc.no_biases);

  ToyArgs ty;
  auto* toy = app.add_subcommand("make-toy-data", "Write a synthetic corpus with random image features");
  toy->add_option("--task", ty.task)->capture_default_str()->check(CLI::IsMember({"copy", "noisy"}));
  toy->add_option("--pairs", ty.pairs, "Pairs in total (copy 200, noisy 1000)");
  toy->add_option("--valid", ty.valid, "Pairs held out for validation (copy 0, noisy 50)");
  toy->add_option("--feature-dim", ty.feature_dim)->capture_default_str()->check(CLI::PositiveNumber);
  toy->add_option("--seed", ty.seed)->capture_default_str();
  toy->add_option("--output-dir", ty.output_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "mmt: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*learn) learn_bpe_cmd(lb, out);
    else if (*apply) apply_bpe_cmd(ab);
    else if (*vocab) build_vocab_cmd(bv, out);
    else if (*trainc) train_cmd(tr, out);
    else if (*trans) translate_cmd(tl);
    else if (*score) score_cmd(sc, out);
    else if (*grad) return gradcheck_cmd(gc, out) ? 0 : 1;
    else if (*toy) toy_cmd(ty, out);
  } catch (const std::exception& e) {
    err << "mmt: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mmt
