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
#include <array>
#include <atomic>
#include <exception>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "capy/corpus.hpp"
#include "capy/error.hpp"
#include "capy/genclient.hpp"
#include "capy/rng.hpp"
#include "capy/rouge.hpp"

namespace capy {

struct ConstructionConfig {
  bool enable_ground_truth = true;
  bool enable_incorrect = true;
  bool enable_augmentation = true;
  // Read as "per generator, per strategy": 2 generators x 2 strategies x 2 = 8
  // augmented rows per generation instance by default.
  std::size_t samples_per_generator_per_strategy = 2;
  std::vector<DecodingConfig> augmentation_strategies = {DecodingConfig::top_k(40),
                                                         DecodingConfig::nucleus(0.95)};
  // Exact duplicate (instruction, response) rows collapse to the highest score.
  bool deduplicate = true;
  std::uint64_t seed = 0;
};

inline nlohmann::ordered_json to_json(const ConstructionConfig& c) {
  nlohmann::ordered_json j;
  j["enable_ground_truth"] = c.enable_ground_truth;
  j["enable_incorrect"] = c.enable_incorrect;
  j["enable_augmentation"] = c.enable_augmentation;
  j["samples_per_generator_per_strategy"] = c.samples_per_generator_per_strategy;
  j["augmentation_strategies"] = nlohmann::ordered_json::array();
  for (const auto& s : c.augmentation_strategies) j["augmentation_strategies"].push_back(to_json(s));
  j["deduplicate"] = c.deduplicate;
  j["seed"] = c.seed;
  return j;
}

inline ConstructionConfig construction_from_json(const nlohmann::json& j) {
  ConstructionConfig c;
  if (!j.is_object()) throw ValidationError("construction config must be an object");
  c.enable_ground_truth = j.value("enable_ground_truth", c.enable_ground_truth);
  c.enable_incorrect = j.value("enable_incorrect", c.enable_incorrect);
  c.enable_augmentation = j.value("enable_augmentation", c.enable_augmentation);
  c.samples_per_generator_per_strategy =
      j.value("samples_per_generator_per_strategy", c.samples_per_generator_per_strategy);
  if (c.samples_per_generator_per_strategy == 0)
    throw ValidationError("construction.samples_per_generator_per_strategy must be positive");
  if (auto it = j.find("augmentation_strategies"); it != j.end()) {
    c.augmentation_strategies.clear();
    for (const auto& s : *it) c.augmentation_strategies.push_back(decoding_from_json(s));
  }
  c.deduplicate = j.value("deduplicate", c.deduplicate);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Examples plus non-fatal notes (e.g. a generation instance with no partner).
struct ComponentResult {
  std::vector<RegressionExample> examples;
  std::vector<std::string> warnings;
};

namespace detail {
inline std::string describe(const InstanceKey& k) {
  return "(" + k.task_id + ", " + k.template_id + ", " + k.instance_id + ")";
}
}  // namespace detail

inline RegressionExample build_ground_truth(const TaskInstance& inst) {
  return {inst.instruction, inst.ground_truth, 1.0, Provenance::ground_truth, inst.key()};
}

inline ComponentResult build_incorrect(const TaskInstance& inst, const Corpus& corpus, Rng& rng) {
  ComponentResult r;
  if (inst.kind == TaskKind::classification) {
    for (const auto& c : *inst.choices)
      if (c != inst.ground_truth)
        r.examples.push_back({inst.instruction, c, 0.0, Provenance::incorrect_choice, inst.key()});
    return r;
  }
  // Partner: another instance of the same task whose target differs as text.
  std::vector<const TaskInstance*> partners;
  if (auto it = corpus.tasks().find(inst.task_id); it != corpus.tasks().end()) {
    for (auto i : it->second) {
      const auto& other = corpus.instances()[i];
      if (other.key() != inst.key() && other.ground_truth != inst.ground_truth)
        partners.push_back(&other);
    }
  }
  if (partners.empty()) {
    r.warnings.push_back("no partner with a distinct ground truth for " +
                         detail::describe(inst.key()) + "; mismatch example skipped");
    return r;
  }
  const auto* p = partners[rng.uniform_index(partners.size())];
  r.examples.push_back({inst.instruction, p->ground_truth, 0.0, Provenance::mismatch, inst.key()});
  return r;
}

// Samples every generator under every augmentation strategy and labels each
// response with its Rouge-L F1 against the ground truth.
inline std::vector<RegressionExample> build_augmented(const TaskInstance& inst,
                                                      const ConstructionConfig& config,
                                                      const std::vector<GeneratorHandle>& generators,
                                                      Rng& rng) {
  if (inst.kind != TaskKind::generation)
    throw PreconditionError("augmentation applies to generation instances only; got " +
                            detail::describe(inst.key()));
  if (!config.enable_augmentation) throw PreconditionError("augmentation is disabled");
  if (generators.empty() || config.augmentation_strategies.empty())
    throw PreconditionError("augmentation needs at least one generator and one strategy");
  const auto reference = rouge::tokenize(inst.ground_truth);
  std::vector<RegressionExample> out;
  for (const auto& g : generators) {
    for (auto cfg : config.augmentation_strategies) {
      cfg.seed = rng.next();
      std::vector<Candidate> samples;
      try {
        samples = g->generate(inst.instruction, cfg, config.samples_per_generator_per_strategy);
      } catch (const TransportError& e) {
        throw TransportError(e.endpoint(),
                             std::string(e.what()) + " while augmenting " + detail::describe(inst.key()));
      } catch (const Error& e) {
        throw Error(std::string(e.what()) + " while augmenting " + detail::describe(inst.key()));
      }
      for (auto& s : samples) {
        const double f1 = rouge::rouge_l_tokens(rouge::tokenize(s.text), reference).f1;
        out.push_back({inst.instruction, std::move(s.text), f1, Provenance::augmented, inst.key()});
      }
    }
  }
  return out;
}

inline std::vector<RegressionExample> build_augmented(const TaskInstance& inst,
                                                      const ConstructionConfig& config,
                                                      const std::vector<GeneratorHandle>& generators) {
  Rng rng(derive_seed(config.seed, std::string_view("augment"), std::string_view(inst.task_id),
                      std::string_view(inst.template_id), std::string_view(inst.instance_id)));
  return build_augmented(inst, config, generators, rng);
}

struct ConstructionOutcome {
  std::vector<RegressionExample> examples;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;  // per-instance failures that were skipped
  std::size_t deduplicated = 0;
};

// Collapses exact (instruction, response) duplicates to the highest-scoring
// row; on equal scores the first occurrence wins. Order otherwise preserved.
inline std::size_t deduplicate(std::vector<RegressionExample>& rows) {
  std::map<std::pair<std::string, std::string>, std::size_t> best;
  std::vector<bool> keep(rows.size(), true);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [it, fresh] = best.try_emplace({rows[i].instruction, rows[i].response}, i);
    if (fresh) continue;
    if (rows[i].score > rows[it->second].score) {
      keep[it->second] = false;
      it->second = i;
    } else {
      keep[i] = false;
    }
  }
  std::vector<RegressionExample> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (keep[i]) out.push_back(std::move(rows[i]));
  const std::size_t removed = rows.size() - out.size();
  rows = std::move(out);
  return removed;
}

// Runs every enabled component over the corpus. Each instance draws from
// streams derived from (seed, instance key), so output does not depend on
// `workers`. Transport and I/O failures abort; anything else is counted and
// the instance skipped.
inline ConstructionOutcome build_dataset(const Corpus& corpus, const ConstructionConfig& config,
                                         const std::vector<GeneratorHandle>& generators,
                                         unsigned workers = 1) {
  if (config.enable_augmentation && (generators.empty() || config.augmentation_strategies.empty()))
    throw PreconditionError("augmentation enabled but no generators or strategies configured");

  const auto& instances = corpus.instances();
  struct Slot {
    ComponentResult rows;
    std::string error;
    std::exception_ptr fatal;
  };
  std::vector<Slot> slots(instances.size());

  auto work = [&](std::size_t i) {
    const auto& inst = instances[i];
    auto& slot = slots[i];
    try {
      if (config.enable_ground_truth) slot.rows.examples.push_back(build_ground_truth(inst));
      if (config.enable_incorrect) {
        Rng rng(derive_seed(config.seed, std::string_view("incorrect"), std::string_view(inst.task_id),
                            std::string_view(inst.template_id), std::string_view(inst.instance_id)));
        auto r = build_incorrect(inst, corpus, rng);
        for (auto& e : r.examples) slot.rows.examples.push_back(std::move(e));
        for (auto& w : r.warnings) slot.rows.warnings.push_back(std::move(w));
      }
      if (config.enable_augmentation && inst.kind == TaskKind::generation) {
        for (auto& e : build_augmented(inst, config, generators))
          slot.rows.examples.push_back(std::move(e));
      }
    } catch (const TransportError&) {
      slot.fatal = std::current_exception();
    } catch (const IoError&) {
      slot.fatal = std::current_exception();
    } catch (const Error& e) {
      slot.rows.examples.clear();
      slot.error = e.what();
    }
  };

  workers = std::max(1u, workers);
  if (workers == 1 || instances.size() < 2) {
    for (std::size_t i = 0; i < instances.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < instances.size(); i = next++) work(i);
      });
  }

  ConstructionOutcome out;
  for (auto& s : slots) {
    if (s.fatal) std::rethrow_exception(s.fatal);
    if (!s.error.empty()) out.errors.push_back(std::move(s.error));
    for (auto& w : s.rows.warnings) out.warnings.push_back(std::move(w));
    for (auto& e : s.rows.examples) out.examples.push_back(std::move(e));
  }
  if (config.deduplicate) out.deduplicated = deduplicate(out.examples);
  Rng shuffle(derive_seed(config.seed, std::string_view("shuffle")));
  shuffle.shuffle(out.examples);
  return out;
}

// Provenance counts and a 10-bin score histogram; bin i covers
// [i/10, (i+1)/10), with 1.0 in the last bin.
struct DatasetSummary {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_provenance;
  std::array<std::size_t, 10> histogram{};
  std::set<double> label_set;  // distinct scores, capped
  std::size_t distinct_interior = 0;  // distinct scores strictly inside (0,1)
  bool label_set_truncated = false;
};

inline DatasetSummary summarize(const std::vector<RegressionExample>& rows) {
  constexpr std::size_t kMaxLabels = 64;
  DatasetSummary s;
  s.total = rows.size();
  for (auto p : {Provenance::ground_truth, Provenance::incorrect_choice, Provenance::mismatch,
                 Provenance::augmented})
    s.per_provenance[std::string(to_string(p))] = 0;
  std::set<double> distinct, interior;
  for (const auto& r : rows) {
    ++s.per_provenance[std::string(to_string(r.provenance))];
    ++s.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(r.score * 10.0))];
    distinct.insert(r.score);
    if (r.score > 0.0 && r.score < 1.0) interior.insert(r.score);
  }
  s.distinct_interior = interior.size();
  s.label_set_truncated = distinct.size() > kMaxLabels;
  for (double x : distinct) {
    if (s.label_set.size() == kMaxLabels) break;
    s.label_set.insert(x);
  }
  return s;
}

inline nlohmann::ordered_json to_json(const DatasetSummary& s) {
  nlohmann::ordered_json j;
  j["total"] = s.total;
  j["per_provenance"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.per_provenance) j["per_provenance"][k] = v;
  j["histogram"] = s.histogram;
  j["distinct_interior_scores"] = s.distinct_interior;
  j["label_set"] = std::vector<double>(s.label_set.begin(), s.label_set.end());
  j["label_set_truncated"] = s.label_set_truncated;
  return j;
}

inline nlohmann::ordered_json construction_report(const ConstructionOutcome& o) {
  nlohmann::ordered_json j = to_json(summarize(o.examples));
  j["deduplicated"] = o.deduplicated;
  j["warnings"] = o.warnings.size();
  j["errors"] = o.errors.size();
  return j;
}

}  // namespace capy
