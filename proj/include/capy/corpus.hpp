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
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "capy/error.hpp"
#include "capy/rng.hpp"

namespace capy {

enum class TaskKind { classification, generation };

inline std::string_view to_string(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "generation";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "generation") return TaskKind::generation;
  throw ParseError("unknown task kind '" + std::string(s) + "'");
}

struct InstanceKey {
  std::string task_id;
  std::string template_id;
  std::string instance_id;

  auto operator<=>(const InstanceKey&) const = default;
};

struct TaskInstance {
  std::string task_id;
  std::string template_id;
  std::string instance_id;
  TaskKind kind = TaskKind::generation;
  std::string instruction;
  std::string ground_truth;
  std::optional<std::vector<std::string>> choices;

  InstanceKey key() const { return {task_id, template_id, instance_id}; }
  bool operator==(const TaskInstance&) const = default;
};

enum class Provenance { ground_truth, incorrect_choice, mismatch, augmented };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::ground_truth: return "ground_truth";
    case Provenance::incorrect_choice: return "incorrect_choice";
    case Provenance::mismatch: return "mismatch";
    case Provenance::augmented: return "augmented";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "ground_truth") return Provenance::ground_truth;
  if (s == "incorrect_choice") return Provenance::incorrect_choice;
  if (s == "mismatch") return Provenance::mismatch;
  if (s == "augmented") return Provenance::augmented;
  throw ParseError("unknown provenance '" + std::string(s) + "'");
}

struct RegressionExample {
  std::string instruction;
  std::string response;
  double score = 0.0;
  Provenance provenance = Provenance::ground_truth;
  InstanceKey source_instance;

  bool operator==(const RegressionExample&) const = default;
};

// Throws ValidationError if `inst` breaks a TaskInstance invariant.
inline void validate(const TaskInstance& inst, std::size_t line = 0) {
  if (inst.kind == TaskKind::classification) {
    if (!inst.choices) throw ValidationError("classification instance without choices", line);
    const std::set<std::string> distinct(inst.choices->begin(), inst.choices->end());
    if (distinct.size() < 2)
      throw ValidationError("classification instance needs at least 2 distinct choices", line);
    if (!distinct.contains(inst.ground_truth))
      throw ValidationError("ground_truth '" + inst.ground_truth + "' is not one of the choices",
                            line);
  } else if (inst.choices) {
    throw ValidationError("generation instance must not carry choices", line);
  }
}

inline void validate(const RegressionExample& ex, std::size_t line = 0) {
  if (!(ex.score >= 0.0 && ex.score <= 1.0))
    throw ValidationError("score " + std::to_string(ex.score) + " outside [0,1]", line);
  if (ex.provenance == Provenance::ground_truth && ex.score != 1.0)
    throw ValidationError("ground_truth row must score exactly 1.0", line);
  if ((ex.provenance == Provenance::incorrect_choice || ex.provenance == Provenance::mismatch) &&
      ex.score != 0.0)
    throw ValidationError(std::string(to_string(ex.provenance)) + " row must score exactly 0.0",
                          line);
}

// Validated task instances. Immutable once loaded.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<TaskInstance> instances, std::uint64_t global_seed = 0)
      : instances_(std::move(instances)), global_seed_(global_seed) {
    std::set<InstanceKey> seen;
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      validate(instances_[i]);
      if (!seen.insert(instances_[i].key()).second)
        throw ValidationError("duplicate instance (" + instances_[i].task_id + ", " +
                              instances_[i].template_id + ", " + instances_[i].instance_id + ")");
      by_task_[instances_[i].task_id].push_back(i);
    }
  }

  const std::vector<TaskInstance>& instances() const noexcept { return instances_; }
  std::size_t size() const noexcept { return instances_.size(); }
  bool empty() const noexcept { return instances_.empty(); }
  std::uint64_t global_seed() const noexcept { return global_seed_; }

  // task_id -> indices into instances(), in file order.
  const std::map<std::string, std::vector<std::size_t>>& tasks() const noexcept { return by_task_; }

  std::vector<TaskInstance> task_instances(const std::string& task_id) const {
    std::vector<TaskInstance> out;
    if (auto it = by_task_.find(task_id); it != by_task_.end())
      for (auto i : it->second) out.push_back(instances_[i]);
    return out;
  }

 private:
  std::vector<TaskInstance> instances_;
  std::uint64_t global_seed_ = 0;
  std::map<std::string, std::vector<std::size_t>> by_task_;
};

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::ordered_json to_json(const TaskInstance& t) {
  nlohmann::ordered_json j;
  j["task_id"] = t.task_id;
  j["template_id"] = t.template_id;
  j["instance_id"] = t.instance_id;
  j["kind"] = to_string(t.kind);
  j["instruction"] = t.instruction;
  j["ground_truth"] = t.ground_truth;
  if (t.choices) j["choices"] = *t.choices;
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(std::string("missing field '") + field + "'", line);
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* field, std::size_t line) {
  const auto& v = require(j, field, line);
  if (!v.is_string()) throw ParseError(std::string("field '") + field + "' must be a string", line);
  return v.get<std::string>();
}

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

// Shortest text that reads back as the same double, padded to 17 digits.
inline std::string format_score(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

inline TaskInstance task_from_json(const nlohmann::json& j, std::size_t line = 0) {
  if (!j.is_object()) throw ParseError("expected a JSON object", line);
  TaskInstance t;
  t.task_id = detail::require_string(j, "task_id", line);
  t.template_id = detail::require_string(j, "template_id", line);
  t.instance_id = detail::require_string(j, "instance_id", line);
  try {
    t.kind = parse_task_kind(detail::require_string(j, "kind", line));
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line);
  }
  t.instruction = detail::require_string(j, "instruction", line);
  t.ground_truth = detail::require_string(j, "ground_truth", line);
  if (auto it = j.find("choices"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'choices' must be an array", line);
    std::vector<std::string> cs;
    for (const auto& c : *it) {
      if (!c.is_string()) throw ParseError("choices must be strings", line);
      cs.push_back(c.get<std::string>());
    }
    t.choices = std::move(cs);
  }
  validate(t, line);
  return t;
}

inline std::string to_jsonl_line(const RegressionExample& ex) {
  std::string s = "{\"instruction\":";
  s += nlohmann::json(ex.instruction).dump();
  s += ",\"response\":";
  s += nlohmann::json(ex.response).dump();
  s += ",\"score\":";
  s += detail::format_score(ex.score);
  s += ",\"provenance\":\"";
  s += to_string(ex.provenance);
  s += "\",\"source_instance\":";
  nlohmann::ordered_json src;
  src["task_id"] = ex.source_instance.task_id;
  src["template_id"] = ex.source_instance.template_id;
  src["instance_id"] = ex.source_instance.instance_id;
  s += src.dump();
  s += "}";
  return s;
}

inline RegressionExample regression_from_json(const nlohmann::json& j, std::size_t line = 0) {
  if (!j.is_object()) throw ParseError("expected a JSON object", line);
  RegressionExample ex;
  ex.instruction = detail::require_string(j, "instruction", line);
  ex.response = detail::require_string(j, "response", line);
  const auto& score = detail::require(j, "score", line);
  if (!score.is_number()) throw ParseError("field 'score' must be a number", line);
  ex.score = score.get<double>();
  try {
    ex.provenance = parse_provenance(detail::require_string(j, "provenance", line));
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line);
  }
  const auto& src = detail::require(j, "source_instance", line);
  if (!src.is_object()) throw ParseError("field 'source_instance' must be an object", line);
  ex.source_instance = {detail::require_string(src, "task_id", line),
                        detail::require_string(src, "template_id", line),
                        detail::require_string(src, "instance_id", line)};
  validate(ex, line);
  return ex;
}

// Calls fn(json, line_no) for every non-blank line of a JSONL file.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (detail::blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), no);
    }
    fn(j, no);
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Task corpora

inline Corpus load_tasks(const std::string& path, std::uint64_t global_seed = 0) {
  std::vector<TaskInstance> out;
  std::set<InstanceKey> seen;
  for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
    auto t = task_from_json(j, line);
    if (!seen.insert(t.key()).second) throw ValidationError("duplicate instance key", line);
    out.push_back(std::move(t));
  });
  return Corpus(std::move(out), global_seed);
}

inline void write_tasks(const std::vector<TaskInstance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& t : instances) out << to_json(t).dump() << '\n';
  if (!out) throw IoError("write failure on '" + path + "'");
}

// Uniform seeded subsample of exactly `cap` items, original relative order kept.
// Inputs at or below the cap come back unchanged.
template <typename T>
std::vector<T> cap_dataset(const std::vector<T>& items, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw PreconditionError("cap must be >= 1");
  if (items.size() <= cap) return items;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `cap` slots end up a uniform sample.
  for (std::size_t i = 0; i < cap; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(cap);
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

// Applies cap_dataset to every task_id group with a per-task derived seed.
inline Corpus cap_corpus(const Corpus& corpus, std::size_t cap, std::uint64_t seed) {
  std::vector<TaskInstance> out;
  for (const auto& [task_id, idx] : corpus.tasks()) {
    auto kept = cap_dataset(idx, cap, derive_seed(seed, std::string_view(task_id)));
    for (auto i : kept) out.push_back(corpus.instances()[i]);
  }
  return Corpus(std::move(out), corpus.global_seed());
}

inline constexpr std::size_t kDefaultDatasetCap = 500'000;

// ---------------------------------------------------------------------------
// Regression datasets

inline std::size_t write_regression_dataset(const std::vector<RegressionExample>& examples,
                                            const std::string& path) {
  for (const auto& ex : examples) validate(ex);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& ex : examples) out << to_jsonl_line(ex) << '\n';
  if (!out) throw IoError("write failure on '" + path + "'");
  return examples.size();
}

inline std::vector<RegressionExample> read_regression_dataset(const std::string& path) {
  std::vector<RegressionExample> out;
  for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
    out.push_back(regression_from_json(j, line));
  });
  return out;
}

}  // namespace capy
