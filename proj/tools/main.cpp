// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "mmt/cli.hpp"

int main(int argc, char** argv) { return mmt::run_cli(argc, argv, std::cout, std::cerr); }
