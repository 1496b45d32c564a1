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

#include "capy/select.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "capy/rng.hpp"

namespace capy {
namespace {

TaskInstance sentiment() {
  return {"sent", "p0", "1", TaskKind::classification, "Review: great film. Sentiment?", "positive",
          std::vector<std::string>{"negative", "positive", "neutral"}};
}

std::vector<Candidate> candidates(std::initializer_list<std::string> texts) {
  std::vector<Candidate> out;
  for (const auto& t : texts) out.push_back(Candidate{t, std::nullopt, {}, 0});
  return out;
}

TEST(Argmax, FirstMaximumWins) {
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.9, 0.9}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5, 0.5}), 0u);
  EXPECT_THROW(argmax(std::vector<double>{}), PreconditionError);
}

TEST(Classification, OracleSelectsGroundTruth) {
  const auto inst = sentiment();
  const OracleScorer oracle(ReferenceMap{{inst.instruction, inst.ground_truth}});
  const auto r = select_classification(inst, oracle, SelectionMethod::oracle);
  EXPECT_EQ(r.chosen_text, "positive");
  EXPECT_EQ(r.chosen_index, 1u);
  EXPECT_EQ(r.scores.size(), 3u);
}

TEST(Classification, ConstantScorerPicksFirst) {
  const FunctionScorer s([](const auto&, const auto&) { return 0.4; });
  EXPECT_EQ(select_classification(sentiment(), s).chosen_index, 0u);
}

TEST(Classification, ScoresRecorded) {
  TaskInstance inst{"t", "p", "1", TaskKind::classification, "q", "b", std::vector<std::string>{"a", "b"}};
  const FunctionScorer s([](const auto&, const std::string& r) { return r == "a" ? 0.3 : 0.7; });
  const auto res = select_classification(inst, s);
  EXPECT_EQ(res.chosen_index, 1u);
  EXPECT_EQ(res.scores, (std::vector<double>{0.3, 0.7}));
  EXPECT_EQ(to_json(res)["method"], "cappy");
  EXPECT_THROW(select_generation("q", {}, s), PreconditionError);
}

TEST(Classification, LikelihoodScorerFollowsMeanLoglikelihood) {
  const auto inst = sentiment();
  const auto gen = std::make_shared<StubGenerator>(ReferenceMap{{inst.instruction, inst.ground_truth}}, 5);
  const LikelihoodScorer s(gen);
  std::vector<double> means;
  for (const auto& c : *inst.choices) {
    const auto lp = gen->loglikelihood(inst.instruction, c);
    double sum = 0;
    for (double x : lp) sum += x;
    means.push_back(sum / double(lp.size()));
  }
  const auto expected = static_cast<std::size_t>(std::max_element(means.begin(), means.end()) - means.begin());
  EXPECT_EQ(select_classification(inst, s, SelectionMethod::self_scoring).chosen_index, expected);
}

TEST(Generation, OracleFindsReference) {
  const OracleScorer oracle(ReferenceMap{{"q", "the cat sat on the mat"}});
  const auto r = select_generation("q", candidates({"a dog", "the cat sat on the mat", "the cat"}), oracle);
  EXPECT_EQ(r.chosen_index, 1u);
  EXPECT_DOUBLE_EQ(r.scores[1], 1.0);
}

TEST(Generation, SingletonAlwaysChosen) {
  const FunctionScorer zero([](const auto&, const auto&) { return 0.0; });
  EXPECT_EQ(select_generation("q", candidates({"only"}), zero).chosen_text, "only");
}

TEST(Generation, ArgmaxInvariantUnderCube) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t salt = rng.next();
    auto base = [salt](const std::string&, const std::string& r) {
      return Rng(derive_seed(salt, std::string_view(r))).uniform01();
    };
    const FunctionScorer plain(base);
    const FunctionScorer cubed([base](const std::string& i, const std::string& r) { return std::pow(base(i, r), 3); });
    std::vector<Candidate> pool;
    const std::size_t n = 1 + rng.uniform_index(17);
    for (std::size_t k = 0; k < n; ++k) pool.push_back(Candidate{"cand " + std::to_string(rng.uniform_index(12)), std::nullopt, {}, 0});
    ASSERT_EQ(select_generation("q", pool, plain).chosen_index, select_generation("q", pool, cubed).chosen_index);
  }
}

TEST(Generation, NestedPoolsNeverLoseMaximum) {
  const StubGenerator gen(ReferenceMap{{"q", "the quick brown fox jumps over the lazy dog"}}, 3);
  const OracleScorer oracle(ReferenceMap{{"q", "the quick brown fox jumps over the lazy dog"}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto pool = collect_candidate_pool(gen, "q", seed);
    double prev = -1;
    for (std::size_t size : {1, 4, 17}) {
      const std::vector<Candidate> prefix(pool.begin(), pool.begin() + size);
      const auto r = select_generation("q", prefix, oracle);
      EXPECT_GE(r.scores[r.chosen_index], prev);
      prev = r.scores[r.chosen_index];
    }
  }
}

TEST(SelfScoring, MeanLogprob) {
  auto cs = candidates({"a", "b", "c"});
  cs[0].token_logprobs = std::vector<double>{-1.0};
  cs[1].token_logprobs = std::vector<double>{-0.5};
  cs[2].token_logprobs = std::vector<double>{-2.0};
  const StubGenerator unused(ReferenceMap{});
  EXPECT_EQ(self_score_select("q", cs, unused).chosen_index, 1u);
  EXPECT_EQ(self_score_select("q", candidates({"solo"}), unused).chosen_index, 0u);
}

TEST(SelfScoring, MeanAndSumDisagree) {
  ScriptedGenerator::Script s;
  s["q"] = {{"short answer", std::vector<double>{-1.0, -1.0}, std::nullopt},
            {"a much longer answer of ten tokens right here ok", std::vector<double>(10, -0.5), std::nullopt}};
  const ScriptedGenerator gen(s);
  const auto cs = candidates({"short answer", "a much longer answer of ten tokens right here ok"});
  EXPECT_EQ(self_score_select("q", cs, gen).chosen_index, 1u);
  EXPECT_DOUBLE_EQ(self_score_select("q", cs, gen).scores[1], -0.5);
  EXPECT_EQ(self_score_select("q", cs, gen, LikelihoodNormalization::sum).chosen_index, 0u);
}

TEST(Random, SingletonAndDeterminism) {
  EXPECT_EQ(random_select(candidates({"x"}), 9).chosen_index, 0u);
  const auto cs = candidates({"a", "b", "c", "d"});
  EXPECT_EQ(random_select(cs, 123).chosen_index, random_select(cs, 123).chosen_index);
}

TEST(Random, UniformOverSeeds) {
  const auto cs = candidates({"a", "b", "c", "d"});
  std::array<int, 4> hits{};
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++hits[random_select(cs, seed).chosen_index];
  // Binomial(10000, 0.25): mean 2500, sd 43.30.
  for (int h : hits) EXPECT_NEAR(h, 2500.0, 4 * 43.30127);
}

}  // namespace
}  // namespace capy
