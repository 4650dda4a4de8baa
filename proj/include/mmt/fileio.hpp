// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmt {

/// Writes `bytes` to a temporary sibling and renames it over `path`, so readers
/// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Lines without their terminators. A final newline does not start an extra line.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace mmt
