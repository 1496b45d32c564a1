// Copyright 2026 The Capy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capy::rouge {

using TokenSequence = std::vector<std::string>;

struct RougeScore {
  std::size_t lcs_len = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {
inline bool is_alnum_ascii(char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
inline char to_lower_ascii(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}
}  // namespace detail

// Lowercases and splits on every non-alphanumeric byte. Bytes outside ASCII
// count as separators, so the output alphabet is [a-z0-9].
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string cur;
  for (char c : text) {
    if (detail::is_alnum_ascii(c)) {
      cur.push_back(detail::to_lower_ascii(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Longest common subsequence length, O(|a|·|b|) time and O(min) memory.
template <typename T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return 0;
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diag = 0;  // row[j-1] from the previous iteration of the outer loop
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = (x == b[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row.back();
}

inline std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  return lcs_length(std::span<const std::string>(a), std::span<const std::string>(b));
}

// Score from token sequences; empty sides give zero components.
inline RougeScore rouge_l_tokens(const TokenSequence& candidate, const TokenSequence& reference) {
  RougeScore s;
  s.lcs_len = lcs_length(candidate, reference);
  if (!candidate.empty()) s.precision = static_cast<double>(s.lcs_len) / candidate.size();
  if (!reference.empty()) s.recall = static_cast<double>(s.lcs_len) / reference.size();
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

// Whole-text Rouge-L with balanced F-measure.
inline RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l_tokens(tokenize(candidate), tokenize(reference));
}

}  // namespace capy::rouge
