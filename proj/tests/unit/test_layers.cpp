// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mmt/gradcheck.hpp"
#include "mmt/layers.hpp"
#include "test_support.hpp"

using namespace mmt;
using mmt::testing::random_tensor;
using mmt::testing::randomize;

namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("gru cell with zero weights") {
  GruParams p("g", 1, false);
  Tape tape(false);
  SUBCASE("zero input keeps half of the previous state") {
    Var h = gru_cell(tape.constant(Tensor::row({0.0})), tape.constant(Tensor::row({0.8})), p);
    CHECK(h.value()[0] == doctest::Approx(0.4).epsilon(1e-15));
  }
  SUBCASE("unit input from a zero state") {
    Var h = gru_cell(tape.constant(Tensor::row({1.0})), tape.constant(Tensor::row({0.0})), p);
    CHECK(h.value()[0] == doctest::Approx(0.20482).epsilon(1e-5));
    CHECK(h.value()[0] == doctest::Approx((1.0 - sigmoid_ref(1.0)) * std::tanh(1.0)).epsilon(1e-14));
  }
}

TEST_CASE("saturated update gate copies the previous state") {
  GruParams p("g", 2, false);
  p.wz.value.fill(50.0);
  Tape tape(false);
  const Tensor prev = Tensor::row({0.7, 0.9});
  Var h = gru_cell(tape.constant(Tensor::row({0.3, -0.2})), tape.constant(prev), p);
  CHECK(h.value()[0] == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(h.value()[1] == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("gru output lies between candidate and previous state") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    GruParams p("g", 5, true);
    p.visit([&](Parameter& q) { randomize(q, rng, 1.0); });
    Tape tape(false);
    Var x = tape.constant(random_tensor({3, 5}, rng, 2.0));
    Var prev = tape.constant(random_tensor({3, 5}, rng, 1.0));
    Var h = gru_cell(x, prev, p);
    // Candidate recomputed from its definition.
    Var r = sigmoid(add_bias(add(x, matmul(prev, tape.parameter(p.wr))), tape.parameter(*p.br)));
    Var cand = tanh(add_bias(add(x, mul(r, matmul(prev, tape.parameter(p.wh)))), tape.parameter(*p.bh)));
    for (std::size_t i = 0; i < h.value().size(); ++i) {
      const double lo = std::min(cand.value()[i], prev.value()[i]);
      const double hi = std::max(cand.value()[i], prev.value()[i]);
      CHECK(h.value()[i] >= lo - 1e-15);
      CHECK(h.value()[i] <= hi + 1e-15);
    }
  }
}

TEST_CASE("gru rejects mismatched extents") {
  GruParams p("g", 3, true);
  Tape tape;
  CHECK_THROWS_AS(gru_cell(tape.constant(Tensor({1, 2})), tape.constant(Tensor({1, 3})), p), std::invalid_argument);
  CHECK_THROWS_AS(gru_cell(tape.constant(Tensor({1, 3})), tape.constant(Tensor({1, 4})), p), std::invalid_argument);
}

TEST_CASE("three chained gru steps pass grad_check") {
  Rng rng(3);
  GruParams p("g", 4, true);
  p.visit([&](Parameter& q) { randomize(q, rng, 0.8); });
  const Tensor xs = random_tensor({2, 4}, rng);
  const Tensor x2 = random_tensor({2, 4}, rng);
  const Tensor x3 = random_tensor({2, 4}, rng);
  const Tensor h0 = random_tensor({2, 4}, rng);
  auto program = [&](Tape& tape) {
    Var h = tape.constant(h0);
    for (const Tensor* x : {&xs, &x2, &x3}) h = gru_cell(tape.constant(*x), h, p);
    return sum(mul(h, h));
  };
  std::vector<Parameter*> params;
  p.visit([&](Parameter& q) { params.push_back(&q); });
  const auto report = grad_check(program, params);
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("gated tanh examples") {
  GhtParams p("ght", 1, 1);
  Tape tape(false);
  SUBCASE("zero parameters give zero") {
    CHECK(gated_tanh(tape.constant(Tensor::row({3.0})), p).value()[0] == 0.0);
  }
  SUBCASE("half-open gate") {
    p.wt.value.fill(1.0);
    CHECK(gated_tanh(tape.constant(Tensor::row({2.0})), p).value()[0] == doctest::Approx(0.48201).epsilon(1e-5));
  }
}

TEST_CASE("gated tanh stays inside its tanh envelope") {
  Rng rng(5);
  GhtParams p("ght", 6, 4);
  p.visit([&](Parameter& q) { randomize(q, rng, 2.0); });
  Tape tape(false);
  Var x = tape.constant(random_tensor({10, 6}, rng, 3.0));
  Var y = gated_tanh(x, p);
  Var envelope = tanh(add_bias(matmul(x, tape.parameter(p.wt)), tape.parameter(p.bt)));
  for (std::size_t i = 0; i < y.value().size(); ++i) {
    CHECK(std::abs(y.value()[i]) <= std::abs(envelope.value()[i]));
    CHECK(std::abs(y.value()[i]) < 1.0);
  }
  CHECK_THROWS_AS(gated_tanh(tape.constant(Tensor({1, 5})), p), std::invalid_argument);
}

TEST_CASE("gated tanh passes grad_check") {
  Rng rng(8);
  GhtParams p("ght", 5, 3);
  p.visit([&](Parameter& q) { randomize(q, rng, 1.0); });
  const Tensor x = random_tensor({4, 5}, rng);
  std::vector<Parameter*> params;
  p.visit([&](Parameter& q) { params.push_back(&q); });
  const auto report = grad_check([&](Tape& t) { return sum(gated_tanh(t.constant(x), p)); }, params);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("embedding lookup and projection") {
  EmbeddingParams p("emb", 4, 4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    p.table.value.at(i, i) = 1.0;
    p.projection.value.at(i, i) = 1.0;
  }
  Tape tape;
  const int ids[] = {2, 0, 2};
  Var e = embed(tape, ids, p);
  CHECK(e.shape() == Shape{3, 4});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(e.value().at(r, c) == (static_cast<int>(c) == ids[r] ? 1.0 : 0.0));
  }

  SUBCASE("gradient reaches only the looked-up rows") {
    tape.backward(sum(e));
    for (std::size_t r = 0; r < 4; ++r) {
      double row_abs = 0.0;
      for (std::size_t c = 0; c < 4; ++c) row_abs += std::abs(p.table.grad.at(r, c));
      CHECK((row_abs != 0.0) == (r == 0 || r == 2));
    }
  }
  SUBCASE("out of range ids are rejected") {
    const int bad[] = {4};
    CHECK_THROWS_AS(embed(tape, bad, p), std::out_of_range);
  }
}

TEST_CASE("embedding shapes at full size") {
  EmbeddingParams p("emb", 50, 128, 256);
  Tape tape(false);
  const int ids[] = {7};
  CHECK(embed(tape, ids, p).shape() == Shape{1, 256});
  CHECK(lookup(tape, ids, p).shape() == Shape{1, 128});
}

TEST_CASE("inverted dropout preserves the mean") {
  Rng rng(2024);
  Tape tape;
  Var x = tape.constant(Tensor({1, 100000}, 1.0));
  Var y = dropout(x, 0.5, Mode::kTrain, rng);
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double v : y.value().data()) {
    mean += v;
    zeros += v == 0.0;
    CHECK((v == 0.0 || v == 2.0));
  }
  mean /= 100000.0;
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(zeros > 0);
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::kTrain, rng), std::invalid_argument);
  CHECK(dropout(x, 0.5, Mode::kEval, rng).value() == x.value());
  CHECK(dropout(x, 0.0, Mode::kTrain, rng).value() == x.value());
}
