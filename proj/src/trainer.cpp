// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mmt/metrics.hpp"
#include "mmt/search.hpp"

namespace mmt {

Tensor xavier_init(const Shape& shape, Rng& rng) {
  if (shape.size() != 2) throw std::invalid_argument("xavier_init needs a 2-D shape, got " + shape_string(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void initialize(ModelParams& params, Rng& rng) {
  params.visit([&](Parameter& p) {
    p.value = p.value.rank() == 2 ? xavier_init(p.value.shape(), rng) : Tensor(p.value.shape());
    p.zero_grad();
  });
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw std::runtime_error("non-finite gradient in parameter '" + p->name + "'");
  }
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.data()) g *= factor;
    }
  }
  return norm;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw std::invalid_argument("adam_step: gradient " + shape_string(p->grad.shape()) + " does not match '" +
                                  p->name + "' " + shape_string(p->value.shape()));
    }
    auto [m_it, m_new] = state.first_moment.try_emplace(p->name, p->value.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(p->name, p->value.shape());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (m.shape() != p->value.shape() || v.shape() != p->value.shape()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for '" + p->name + "'");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p->value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig c;
  c.variant = variant;
  c.emb_dim = emb_dim;
  c.hidden_dim = hidden_dim;
  c.feature_dim = feature_dim;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  c.biases = biases;
  return c;
}

void TrainConfig::use_desk_dims() {
  emb_dim = 8;
  hidden_dim = 16;
  feature_dim = 32;
}

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
  };
  positive(batch_size, "batch_size");
  positive(eval_interval, "eval_interval");
  positive(patience, "patience");
  positive(max_updates, "max_updates");
  positive(beam, "beam");
  positive(emb_dim, "emb_dim");
  positive(hidden_dim, "hidden_dim");
  positive(feature_dim, "feature_dim");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("config: clip_norm must be positive");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be positive");
  for (double r : {dropout.embedding, dropout.annotation, dropout.bottleneck}) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("config: dropout rates must lie in [0, 1)");
  }
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "variant = " << variant_name(variant) << '\n'
     << "seed = " << seed << '\n'
     << "batch_size = " << batch_size << '\n'
     << "clip_norm = " << format_double(clip_norm) << '\n'
     << "learning_rate = " << format_double(adam.learning_rate) << '\n'
     << "beta1 = " << format_double(adam.beta1) << '\n'
     << "beta2 = " << format_double(adam.beta2) << '\n'
     << "adam_epsilon = " << format_double(adam.epsilon) << '\n'
     << "dropout_embedding = " << format_double(dropout.embedding) << '\n'
     << "dropout_annotation = " << format_double(dropout.annotation) << '\n'
     << "dropout_bottleneck = " << format_double(dropout.bottleneck) << '\n'
     << "eval_interval = " << eval_interval << '\n'
     << "patience = " << patience << '\n'
     << "max_updates = " << max_updates << '\n'
     << "beam = " << beam << '\n'
     << "emb_dim = " << emb_dim << '\n'
     << "hidden_dim = " << hidden_dim << '\n'
     << "feature_dim = " << feature_dim << '\n'
     << "biases = " << (biases ? "true" : "false") << '\n'
     << "src_vocab = " << src_vocab << '\n'
     << "tgt_vocab = " << tgt_vocab << '\n';
  return os.str();
}

void TrainConfig::merge_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_size = [&]() -> std::size_t {
      std::size_t pos = 0;
      const auto v = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("bad integer");
      return static_cast<std::size_t>(v);
    };
    auto as_double = [&] {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("bad number");
      return v;
    };
    try {
      if (key == "variant") variant = parse_variant(value);
      else if (key == "seed") seed = as_size();
      else if (key == "batch_size") batch_size = as_size();
      else if (key == "clip_norm") clip_norm = as_double();
      else if (key == "learning_rate") adam.learning_rate = as_double();
      else if (key == "beta1") adam.beta1 = as_double();
      else if (key == "beta2") adam.beta2 = as_double();
      else if (key == "adam_epsilon") adam.epsilon = as_double();
      else if (key == "dropout_embedding") dropout.embedding = as_double();
      else if (key == "dropout_annotation") dropout.annotation = as_double();
      else if (key == "dropout_bottleneck") dropout.bottleneck = as_double();
      else if (key == "eval_interval") eval_interval = as_size();
      else if (key == "patience") patience = as_size();
      else if (key == "max_updates") max_updates = as_size();
      else if (key == "beam") beam = as_size();
      else if (key == "emb_dim") emb_dim = as_size();
      else if (key == "hidden_dim") hidden_dim = as_size();
      else if (key == "feature_dim") feature_dim = as_size();
      else if (key == "src_vocab") src_vocab = as_size();
      else if (key == "tgt_vocab") tgt_vocab = as_size();
      else if (key == "biases") {
        if (value != "true" && value != "false") throw std::invalid_argument("expected true or false");
        biases = value == "true";
      } else {
        throw std::invalid_argument("unknown key");
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " ('" + key + "'): " + e.what());
    }
  }
}

TrainConfig TrainConfig::from_text(std::string_view text) {
  TrainConfig c;
  c.merge_text(text);
  return c;
}

Batch ParallelData::batch(std::span<const std::size_t> indices) const {
  std::vector<std::vector<int>> src, tgt;
  Tensor feats({indices.size(), features.cols()});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    src.push_back(sources[i]);
    tgt.push_back(targets[i]);
    std::copy_n(features.data().begin() + i * features.cols(), features.cols(), feats.data().begin() + k * features.cols());
  }
  return make_batch(src, tgt, feats);
}

double corpus_loss(ModelParams& params, const ParallelData& data, std::size_t batch_size) {
  double total = 0.0, tokens = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    Batch b = data.batch(idx);
    Tape tape(false);
    const double n = std::accumulate(b.tgt_mask.begin(), b.tgt_mask.end(), 0.0);
    total += forward_loss(tape, b, params).value().item() * n;
    tokens += n;
  }
  return total / tokens;
}

std::vector<std::vector<int>> decode_all(std::span<ModelParams* const> models, const ParallelData& data,
                                         std::size_t beam) {
  std::vector<std::vector<int>> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tensor row({1, data.features.cols()});
    std::copy_n(data.features.data().begin() + i * data.features.cols(), data.features.cols(), row.data().begin());
    SearchOptions opts;
    opts.beam = beam;
    opts.max_len = 2 * data.sources[i].size() + 5;
    out.push_back(translate(models, data.sources[i], row, opts).tokens);
  }
  return out;
}

namespace {

std::string ids_as_text(std::span<const int> ids) {
  std::string s;
  for (int id : ids) {
    if (!s.empty()) s += ' ';
    s += std::to_string(id);
  }
  return s;
}

}  // namespace

double validation_bleu(ModelParams& params, const ParallelData& data, const Detokenizer& detok, std::size_t beam) {
  ModelParams* models[] = {&params};
  const auto hyps = decode_all(models, data, beam);
  std::vector<Words> h, r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    h.push_back(split_words(detok ? detok(hyps[i]) : ids_as_text(hyps[i])));
    r.push_back(split_words(detok ? detok(data.targets[i]) : ids_as_text(data.targets[i])));
  }
  return bleu4(h, r).bleu;
}

std::string format_log_line(const LogEntry& e) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f", e.update, e.loss, e.val_bleu);
  return buf;
}

namespace {

// Shuffle, sort windows of 20 batches by source length, then shuffle batch order.
std::vector<std::vector<std::size_t>> bucketed_batches(const ParallelData& data, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::size_t window = batch_size * 20;
  for (std::size_t start = 0; start < order.size(); start += window) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return data.sources[a].size() < data.sources[b].size();
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
  }
  rng.shuffle(batches);
  return batches;
}

}  // namespace

TrainResult train(const TrainConfig& config, const ParallelData& train_data, const ParallelData& valid_data,
                  ModelParams& params, Rng& rng, const TrainHooks& hooks) {
  config.validate();
  if (train_data.size() == 0) throw std::invalid_argument("train: empty training data");
  for (const ParallelData* d : {&train_data, &valid_data}) {
    if (d->targets.size() != d->sources.size() || (d->size() > 0 && d->features.rows() != d->size())) {
      throw std::invalid_argument("train: sources, targets and feature rows are misaligned");
    }
    if (d->size() > 0 && d->features.cols() != params.config.feature_dim) {
      throw std::invalid_argument("train: feature dimension " + std::to_string(d->features.cols()) +
                                  " does not match the model's " + std::to_string(params.config.feature_dim));
    }
  }

  auto validate = hooks.validate ? hooks.validate : [&](ModelParams& p) {
    return validation_bleu(p, valid_data, hooks.detokenize, 1);
  };

  const std::vector<Parameter*> plist = params.parameters();
  AdamState adam;
  ForwardContext ctx{Mode::kTrain, config.dropout, &rng};
  TrainResult result;
  result.best = params;
  bool have_best = false;
  std::size_t since_best = 0;
  double loss_acc = 0.0;
  std::size_t loss_count = 0;

  while (result.updates < config.max_updates) {
    for (const auto& indices : bucketed_batches(train_data, config.batch_size, rng)) {
      Batch batch = train_data.batch(indices);
      for (Parameter* p : plist) p->zero_grad();
      double loss_value = 0.0;
      {
        Tape tape;
        Var loss = forward_loss(tape, batch, params, ctx);
        loss_value = loss.value().item();
        tape.backward(loss);
      }
      clip_grad_norm(plist, config.clip_norm);
      adam_step(plist, adam, config.adam);
      ++result.updates;
      result.batch_losses.push_back(loss_value);
      loss_acc += loss_value;
      ++loss_count;

      if (result.updates % config.eval_interval == 0) {
        LogEntry entry{result.updates, loss_acc / static_cast<double>(loss_count), validate(params)};
        loss_acc = 0.0;
        loss_count = 0;
        ++result.evaluations;
        result.history.push_back(entry);
        if (hooks.on_log) hooks.on_log(entry);
        if (!have_best || entry.val_bleu > result.best_metric) {
          have_best = true;
          result.best_metric = entry.val_bleu;
          result.best = params;
          since_best = 0;
          if (hooks.on_improvement) hooks.on_improvement(params, adam, entry);
        } else if (++since_best >= config.patience) {
          result.early_stopped = true;
          return result;
        }
      }
      if (result.updates >= config.max_updates) break;
    }
  }
  if (!have_best) result.best = params;
  return result;
}

TrainResult train(const TrainConfig& config, const ParallelData& train_data, const ParallelData& valid_data,
                  const TrainHooks& hooks) {
  Rng rng(config.seed);
  ModelParams params(config.model_config());
  initialize(params, rng);
  return train(config, train_data, valid_data, params, rng, hooks);
}

}  // namespace mmt
