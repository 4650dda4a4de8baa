// Copyright 2026 The mmt Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mmt {

Words split_words(std::string_view text) {
  Words out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

BleuReport bleu4(std::span<const Words> hypotheses, std::span<const Words> references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu4: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                                std::to_string(references.size()) + " references");
  }
  BleuReport r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    r.hyp_len += hypotheses[s].size();
    r.ref_len += references[s].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts hyp = count_ngrams(hypotheses[s], n);
      const NgramCounts ref = count_ngrams(references[s], n);
      for (const auto& [gram, count] : hyp) {
        r.totals[n - 1] += count;
        if (auto it = ref.find(gram); it != ref.end()) r.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  bool any_zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = r.totals[n] ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    if (r.precisions[n] == 0.0) any_zero = true;
    else log_sum += std::log(r.precisions[n]);
  }
  if (r.hyp_len == 0) {
    r.brevity_penalty = 0.0;
  } else {
    r.brevity_penalty =
        std::min(1.0, std::exp(1.0 - static_cast<double>(r.ref_len) / static_cast<double>(r.hyp_len)));
  }
  r.bleu = any_zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

std::string BleuReport::to_string() const {
  char buf[160];
  const double ratio = ref_len ? static_cast<double>(hyp_len) / static_cast<double>(ref_len) : 0.0;
  std::snprintf(buf, sizeof buf, "BLEU=%.4f p=%.4f/%.4f/%.4f/%.4f BP=%.4f ratio=%.4f", bleu, precisions[0],
                precisions[1], precisions[2], precisions[3], brevity_penalty, ratio);
  return buf;
}

}  // namespace mmt
