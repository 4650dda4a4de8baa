// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmt {

namespace {

double evaluate(const LossProgram& f) {
  Tape tape(false);
  return f(tape).value().item();
}

}  // namespace

GradCheckReport grad_check(const LossProgram& f, std::span<Parameter* const> params, double eps, double tol,
                           double floor) {
  const double first = evaluate(f);
  const double second = evaluate(f);
  if (first != second) {
    throw std::logic_error("grad_check: program is not deterministic (dropout or sampling enabled?)");
  }

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    ParameterCheck check{p->name, 0.0};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate(f);
      p->value[i] = saved - eps;
      const double down = evaluate(f);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double err = std::abs(analytic - numeric) / denom;
      check.max_relative_error = std::max(check.max_relative_error, std::isfinite(err) ? err : INFINITY);
    }
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.parameters.push_back(std::move(check));
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

GradCheckReport check_model_gradients(const ModelConfig& config, std::uint64_t seed, std::size_t src_len,
                                      std::size_t tgt_len, double tol, double floor) {
  if (src_len < 2 || tgt_len < 2) throw std::invalid_argument("check_model_gradients needs lengths of at least 2");
  Rng rng(seed);
  ModelParams params(config);
  params.visit([&](Parameter& p) {
    for (double& v : p.value.data()) v = rng.uniform(-0.5, 0.5);
  });
  auto word = [&](std::size_t vocab) { return static_cast<int>(kNumSpecials + rng.below(vocab - kNumSpecials)); };
  std::vector<std::vector<int>> src(2), tgt(2);
  for (std::size_t t = 0; t < src_len; ++t) src[0].push_back(word(config.src_vocab));
  for (std::size_t t = 0; t + 1 < src_len; ++t) src[1].push_back(word(config.src_vocab));
  for (std::size_t t = 0; t + 1 < tgt_len; ++t) tgt[0].push_back(word(config.tgt_vocab));
  for (std::size_t t = 0; t + 2 < tgt_len; ++t) tgt[1].push_back(word(config.tgt_vocab));
  Tensor features({2, config.feature_dim});
  for (double& v : features.data()) v = rng.uniform(-1.0, 1.0);
  const Batch batch = make_batch(src, tgt, features);
  const auto plist = params.parameters();
  return grad_check([&](Tape& tape) { return forward_loss(tape, batch, params); }, plist, 1e-5, tol, floor);
}

}  // namespace mmt
