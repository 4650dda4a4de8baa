// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmt/autodiff.hpp"
#include "mmt/model.hpp"

namespace mmt {

struct ParameterCheck {
  std::string name;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// A program mapping a fresh tape to a scalar loss.
using LossProgram = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients with central differences of step `eps`.
///
/// The relative error of an element is |a - n| / max(|a|, |n|, floor), so
/// gradients smaller than `floor` are compared absolutely. Throws
/// std::logic_error when two forward passes of `f` disagree.
GradCheckReport grad_check(const LossProgram& f, std::span<Parameter* const> params, double eps = 1e-5,
                           double tol = 1e-4, double floor = 1e-8);

/// Checks every parameter of a model built from `config` on a random
/// two-sentence batch (the second sentence padded) with random features.
/// Weights are drawn uniformly from [-0.5, 0.5]. Deep in the network many
/// gradients are ~1e-8 while central differences carry ~1e-10 of rounding
/// noise, so errors are taken relative to at least `floor`.
GradCheckReport check_model_gradients(const ModelConfig& config, std::uint64_t seed, std::size_t src_len = 3,
                                      std::size_t tgt_len = 3, double tol = 1e-4, double floor = 1e-6);

}  // namespace mmt
