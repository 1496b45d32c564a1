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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "capy/corpus.hpp"
#include "capy/error.hpp"
#include "capy/genclient.hpp"
#include "capy/rng.hpp"
#include "capy/scorer.hpp"

namespace capy {

enum class SelectionMethod { cappy, self_scoring, random, oracle };

inline std::string_view to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::cappy: return "cappy";
    case SelectionMethod::self_scoring: return "self_scoring";
    case SelectionMethod::random: return "random";
    case SelectionMethod::oracle: return "oracle";
  }
  return "?";
}

struct SelectionResult {
  std::size_t chosen_index = 0;
  std::string chosen_text;
  std::vector<double> scores;  // parallel to the candidates
  SelectionMethod method = SelectionMethod::cappy;
};

inline nlohmann::ordered_json to_json(const SelectionResult& r) {
  nlohmann::ordered_json j;
  j["chosen_index"] = r.chosen_index;
  j["chosen_text"] = r.chosen_text;
  j["scores"] = r.scores;
  j["method"] = to_string(r.method);
  return j;
}

// First index of the maximum.
inline std::size_t argmax(std::span<const double> xs) {
  if (xs.empty()) throw PreconditionError("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[best]) best = i;
  return best;
}

namespace detail {
inline SelectionResult pick(std::vector<double> scores, const std::vector<std::string>& texts,
                            SelectionMethod method) {
  SelectionResult r;
  r.chosen_index = argmax(scores);
  r.chosen_text = texts[r.chosen_index];
  r.scores = std::move(scores);
  r.method = method;
  return r;
}

inline std::vector<double> values(const std::vector<Score>& s) {
  std::vector<double> out;
  out.reserve(s.size());
  for (auto x : s) out.push_back(x.value());
  return out;
}

inline std::vector<std::string> texts(const std::vector<Candidate>& cs) {
  std::vector<std::string> out;
  out.reserve(cs.size());
  for (const auto& c : cs) out.push_back(c.text);
  return out;
}
}  // namespace detail

// Scores every predefined choice; ties go to the lowest index.
inline SelectionResult select_classification(const TaskInstance& inst, const Scorer& scorer,
                                             SelectionMethod method = SelectionMethod::cappy) {
  if (inst.kind != TaskKind::classification || !inst.choices)
    throw PreconditionError("select_classification needs a classification instance");
  return detail::pick(detail::values(scorer.score_batch(inst.instruction, *inst.choices)), *inst.choices,
                      method);
}

inline SelectionResult select_generation(const std::string& instruction,
                                         const std::vector<Candidate>& candidates, const Scorer& scorer,
                                         SelectionMethod method = SelectionMethod::cappy) {
  if (candidates.empty()) throw PreconditionError("select_generation needs at least one candidate");
  const auto texts = detail::texts(candidates);
  return detail::pick(detail::values(scorer.score_batch(instruction, texts)), texts, method);
}

enum class LikelihoodNormalization { mean, sum };

// Ranks candidates by backbone log-likelihood, fetching token log-probs for
// candidates that arrived without them.
inline SelectionResult self_score_select(const std::string& instruction,
                                         const std::vector<Candidate>& candidates, const Generator& gen,
                                         LikelihoodNormalization norm = LikelihoodNormalization::mean) {
  if (candidates.empty()) throw PreconditionError("self_score_select needs at least one candidate");
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.text.empty()) throw PreconditionError("self-scoring needs non-empty candidate texts");
    const auto lp = c.token_logprobs ? *c.token_logprobs : gen.loglikelihood(instruction, c.text);
    if (lp.empty()) throw PreconditionError("candidate '" + c.text + "' has no token log-probabilities");
    double s = 0.0;
    for (double x : lp) s += x;
    scores.push_back(norm == LikelihoodNormalization::mean ? s / static_cast<double>(lp.size()) : s);
  }
  return detail::pick(std::move(scores), detail::texts(candidates), SelectionMethod::self_scoring);
}

template <typename T>
SelectionResult random_select_texts(const std::vector<T>& items, std::uint64_t seed) {
  if (items.empty()) throw PreconditionError("random_select needs at least one candidate");
  Rng rng(derive_seed(seed, std::string_view("random_select")));
  SelectionResult r;
  r.chosen_index = rng.uniform_index(items.size());
  if constexpr (std::is_same_v<T, Candidate>) {
    r.chosen_text = items[r.chosen_index].text;
  } else {
    r.chosen_text = items[r.chosen_index];
  }
  r.scores.assign(items.size(), 0.0);
  r.method = SelectionMethod::random;
  return r;
}

// Uniform seeded choice; the scores vector is all zeros.
inline SelectionResult random_select(const std::vector<Candidate>& candidates, std::uint64_t seed) {
  return random_select_texts(candidates, seed);
}

}  // namespace capy
