// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace mmt {

/// Entry point of the `mmt` tool. Returns the process exit status; failures
/// print a single diagnostic line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mmt
