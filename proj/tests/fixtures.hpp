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

// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "capy/corpus.hpp"
#include "capy/rng.hpp"
#include "capy/scorer.hpp"
#include "oracles.hpp"

namespace capy::fixture {

// ---------------------------------------------------------------------------
// Gradient check

struct GradientCase {
  BasicScorerModel<double> model;
  std::vector<TrainingPair> batch;
};

// A model of width 256 with random weights and a batch of 1..4 examples of
// up to 100 distinct features each.
inline GradientCase random_gradient_case(std::uint64_t seed) {
  Rng rng(derive_seed(seed, std::string_view("gradcheck")));
  GradientCase c{BasicScorerModel<double>::fresh(256), {}};
  for (auto& w : c.model.weights) w = 2.0 * rng.uniform01() - 1.0;
  c.model.bias = 2.0 * rng.uniform01() - 1.0;
  const std::size_t n = 1 + rng.uniform_index(4);
  for (std::size_t e = 0; e < n; ++e) {
    std::set<std::uint32_t> idx;
    const std::size_t k = 1 + rng.uniform_index(100);
    while (idx.size() < k) idx.insert(static_cast<std::uint32_t>(rng.uniform_index(256)));
    TrainingPair p;
    for (auto i : idx) {
      p.features.indices.push_back(i);
      p.features.values.push_back(static_cast<float>(2.0 * rng.uniform01() - 1.0) * 0.3f);
    }
    p.target = rng.uniform01();
    c.batch.push_back(std::move(p));
  }
  return c;
}

// Mean squared error of sigmoid outputs, written out directly.
inline double reference_loss(const std::vector<double>& w, double b, const std::vector<TrainingPair>& batch) {
  double total = 0.0;
  for (const auto& ex : batch) {
    double z = b;
    for (std::size_t i = 0; i < ex.features.indices.size(); ++i) z += w[ex.features.indices[i]] * ex.features.values[i];
    const double p = 1.0 / (1.0 + std::exp(-z));
    total += (p - ex.target) * (p - ex.target);
  }
  return total / static_cast<double>(batch.size());
}

// Largest relative error between the analytic gradient and central
// differences at h, over every touched weight and the bias.
inline double gradient_relative_error(const GradientCase& c, double h = 1e-5) {
  const auto [loss, grad] = loss_and_grad(c.model, std::span<const TrainingPair>(c.batch));
  std::set<std::uint32_t> touched;
  for (const auto& ex : c.batch) touched.insert(ex.features.indices.begin(), ex.features.indices.end());
  std::vector<std::uint32_t> coords(touched.begin(), touched.end());

  std::vector<double> x;
  for (auto i : coords) x.push_back(c.model.weights[i]);
  x.push_back(c.model.bias);
  auto f = [&](const std::vector<double>& p) {
    auto w = c.model.weights;
    for (std::size_t k = 0; k < coords.size(); ++k) w[coords[k]] = p[k];
    return reference_loss(w, p.back(), c.batch);
  };
  const auto numeric = oracle::central_difference(f, x, h);

  std::vector<double> analytic(coords.size() + 1, 0.0);
  for (std::size_t k = 0; k < grad.indices.size(); ++k) {
    auto it = std::lower_bound(coords.begin(), coords.end(), grad.indices[k]);
    if (it == coords.end() || *it != grad.indices[k]) return INFINITY;  // gradient on an untouched weight
    analytic[static_cast<std::size_t>(it - coords.begin())] = grad.values[k];
  }
  analytic.back() = grad.bias;

  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-7});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
  }
  if (std::abs(loss - reference_loss(c.model.weights, c.model.bias, c.batch)) > 1e-12) return INFINITY;
  return worst;
}

// ---------------------------------------------------------------------------
// Separable synthetic regression set

// Pairs whose response holds a "good" marker token score 1.0; "bad" marker
// pairs score 0.0. Filler words are shared by both classes.
inline std::vector<RegressionExample> separable_set(std::size_t n, std::uint64_t seed) {
  static const char* good[] = {"excellent", "correct", "accurate", "precise"};
  static const char* bad[] = {"wrong", "garbled", "invalid", "broken"};
  static const char* filler[] = {"the", "answer", "is", "a", "result", "here", "value", "text", "output", "final"};
  Rng rng(derive_seed(seed, std::string_view("separable")));
  std::vector<RegressionExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = i % 2 == 0;
    std::string response;
    const std::size_t len = 3 + rng.uniform_index(5);
    const std::size_t at = rng.uniform_index(len);
    for (std::size_t k = 0; k < len; ++k) {
      if (k) response += ' ';
      response += k == at ? (positive ? good : bad)[rng.uniform_index(4)] : filler[rng.uniform_index(10)];
    }
    const std::string instruction = "question " + std::to_string(rng.uniform_index(50));
    out.push_back({instruction, response, positive ? 1.0 : 0.0,
                   positive ? Provenance::ground_truth : Provenance::mismatch,
                   {"synthetic", "p0", std::to_string(i)}});
  }
  return out;
}

inline TrainConfig separable_config() {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_size = 32;
  c.micro_batch = 16;
  c.total_steps = 2000;
  c.seed = 1;
  return c;
}

inline constexpr std::uint64_t kSeparableDim = std::uint64_t{1} << 16;

inline double held_out_auc(const ScorerModel& model, const std::vector<RegressionExample>& rows) {
  std::vector<double> pos, neg;
  for (const auto& r : rows)
    (r.score == 1.0 ? pos : neg).push_back(predict(model, featurize(r.instruction, r.response, model.feature_dim)).value());
  return oracle::auc(pos, neg);
}

}  // namespace capy::fixture
