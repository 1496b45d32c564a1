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
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "capy/construct.hpp"
#include "capy/corpus.hpp"
#include "capy/error.hpp"
#include "capy/genclient.hpp"
#include "capy/rng.hpp"
#include "capy/rouge.hpp"
#include "capy/scorer.hpp"
#include "capy/select.hpp"

namespace capy {

enum class MetricName { accuracy, rouge_l };

inline std::string_view to_string(MetricName m) { return m == MetricName::accuracy ? "accuracy" : "rouge_l"; }

enum class SystemMode { classification_scorer, generation_decode, generation_select };

// Shares candidate pools between systems so every selector sees the same
// candidates for an instance.
class PoolProvider {
 public:
  PoolProvider(GeneratorHandle gen, PoolSpec spec, std::uint64_t seed)
      : gen_(std::move(gen)), spec_(std::move(spec)), seed_(seed) {}

  std::vector<Candidate> pool(const TaskInstance& inst) const {
    const auto k = inst.key();
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(k); it != cache_.end()) return it->second;
    }
    auto p = collect_candidate_pool(*gen_, inst.instruction, pool_seed(inst), spec_);
    std::lock_guard lock(mu_);
    return cache_.try_emplace(k, std::move(p)).first->second;
  }

  // Depends only on the instance, so nested pool specs share a prefix.
  std::uint64_t pool_seed(const TaskInstance& inst) const {
    return derive_seed(seed_, std::string_view("pool"), std::string_view(inst.task_id),
                       std::string_view(inst.template_id), std::string_view(inst.instance_id));
  }

  const Generator& generator() const { return *gen_; }
  const PoolSpec& spec() const { return spec_; }

 private:
  GeneratorHandle gen_;
  PoolSpec spec_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  mutable std::map<InstanceKey, std::vector<Candidate>> cache_;
};

struct SystemUnderTest {
  std::string name;
  SystemMode mode = SystemMode::generation_select;
  SelectionMethod method = SelectionMethod::cappy;
  ScorerHandle scorer;                   // cappy / oracle (and classification self-scoring)
  GeneratorHandle generator;             // decode and self-scoring
  DecodingConfig decoding;               // generation_decode
  std::shared_ptr<PoolProvider> pool;    // generation_select
  std::size_t random_seeds = 5;          // random control is averaged over this many seeds
  std::uint64_t seed = 0;
};

struct TaskResult {
  std::string system;
  std::string task_id;
  std::string template_id;
  MetricName metric = MetricName::rouge_l;
  double value = 0.0;  // rouge_l in [0,100], accuracy in [0,1]
  std::size_t n_instances = 0;
};

struct TaskMean {
  std::string system;
  std::string task_id;
  MetricName metric = MetricName::rouge_l;
  double value = 0.0;
  std::size_t n_templates = 0;
};

struct MacroRow {
  std::string system;
  MetricName metric = MetricName::rouge_l;
  double value = 0.0;
  std::size_t n_tasks = 0;
};

struct EvalReport {
  std::vector<TaskResult> per_task;
  std::vector<TaskMean> task_means;
  std::vector<MacroRow> macro;
  nlohmann::ordered_json fingerprint = nlohmann::ordered_json::object();
  nlohmann::ordered_json ablation = nlohmann::ordered_json::object();
  nlohmann::ordered_json extras = nlohmann::ordered_json::object();

  // Macro value for a system, if present (first metric found).
  std::optional<double> macro_of(const std::string& system) const {
    for (const auto& m : macro)
      if (m.system == system) return m.value;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline std::uint64_t instance_seed(std::uint64_t seed, std::string_view tag, const TaskInstance& inst) {
  return derive_seed(seed, tag, std::string_view(inst.task_id), std::string_view(inst.template_id),
                     std::string_view(inst.instance_id));
}

inline double classification_hit(const TaskInstance& inst, const SystemUnderTest& sys) {
  const auto& choices = *inst.choices;
  if (sys.method == SelectionMethod::random) {
    double hits = 0;
    for (std::size_t s = 0; s < sys.random_seeds; ++s) {
      auto r = random_select_texts(choices, instance_seed(sys.seed + s, "random", inst));
      hits += r.chosen_text == inst.ground_truth ? 1.0 : 0.0;
    }
    return hits / static_cast<double>(sys.random_seeds);
  }
  if (!sys.scorer) throw PreconditionError("system '" + sys.name + "' has no scorer");
  return select_classification(inst, *sys.scorer, sys.method).chosen_text == inst.ground_truth ? 1.0 : 0.0;
}

inline double generation_rouge(const TaskInstance& inst, const SystemUnderTest& sys) {
  auto f1 = [&](const std::string& text) { return rouge::rouge_l(text, inst.ground_truth).f1; };
  if (sys.mode == SystemMode::generation_decode) {
    if (!sys.generator) throw PreconditionError("system '" + sys.name + "' has no generator");
    auto cfg = sys.decoding;
    cfg.seed = instance_seed(sys.seed, "decode", inst);
    return f1(sys.generator->generate(inst.instruction, cfg, 1).front().text);
  }
  if (!sys.pool) throw PreconditionError("system '" + sys.name + "' has no candidate pool");
  const auto pool = sys.pool->pool(inst);
  switch (sys.method) {
    case SelectionMethod::random: {
      double total = 0;
      for (std::size_t s = 0; s < sys.random_seeds; ++s)
        total += f1(random_select(pool, instance_seed(sys.seed + s, "random", inst)).chosen_text);
      return total / static_cast<double>(sys.random_seeds);
    }
    case SelectionMethod::self_scoring: {
      // Empty samples have no likelihood; they rank last.
      std::vector<Candidate> scored;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (!pool[i].text.empty()) {
          scored.push_back(pool[i]);
          idx.push_back(i);
        }
      if (scored.empty()) return f1(pool.front().text);
      const auto& gen = sys.generator ? *sys.generator : sys.pool->generator();
      return f1(self_score_select(inst.instruction, scored, gen).chosen_text);
    }
    case SelectionMethod::cappy:
    case SelectionMethod::oracle:
      if (!sys.scorer) throw PreconditionError("system '" + sys.name + "' has no scorer");
      return f1(select_generation(inst.instruction, pool, *sys.scorer, sys.method).chosen_text);
  }
  return 0.0;
}

}  // namespace detail

inline bool supports(const SystemUnderTest& sys, TaskKind kind) {
  return kind == TaskKind::classification ? sys.mode == SystemMode::classification_scorer
                                          : sys.mode != SystemMode::classification_scorer;
}

// One (task, template) group. Accuracy in [0,1]; Rouge-L F1 x 100.
inline TaskResult evaluate_task(const std::vector<TaskInstance>& instances, const SystemUnderTest& sys) {
  if (instances.empty()) throw PreconditionError("evaluate_task needs at least one instance");
  const auto& first = instances.front();
  for (const auto& i : instances) {
    if (i.task_id != first.task_id || i.template_id != first.template_id)
      throw PreconditionError("evaluate_task instances must share task_id and template_id");
    if (i.kind != first.kind) throw PreconditionError("mixed task kinds in task '" + first.task_id + "'");
  }
  if (!supports(sys, first.kind))
    throw PreconditionError("system '" + sys.name + "' cannot evaluate " + std::string(to_string(first.kind)) +
                            " task '" + first.task_id + "'");
  TaskResult r{sys.name, first.task_id, first.template_id, MetricName::rouge_l, 0.0, instances.size()};
  double total = 0.0;
  if (first.kind == TaskKind::classification) {
    r.metric = MetricName::accuracy;
    for (const auto& i : instances) total += detail::classification_hit(i, sys);
    r.value = total / static_cast<double>(instances.size());
  } else {
    for (const auto& i : instances) total += detail::generation_rouge(i, sys);
    r.value = 100.0 * total / static_cast<double>(instances.size());
  }
  return r;
}

// (task_id, template_id) -> instances, sorted by key.
inline std::map<std::pair<std::string, std::string>, std::vector<TaskInstance>> group_by_template(
    const Corpus& corpus) {
  std::map<std::pair<std::string, std::string>, std::vector<TaskInstance>> out;
  for (const auto& i : corpus.instances()) out[{i.task_id, i.template_id}].push_back(i);
  return out;
}

// Evaluates every system on every group it supports. Results are ordered
// by system (as given), then task_id, then template_id.
inline std::vector<TaskResult> evaluate_systems(const Corpus& corpus, const std::vector<SystemUnderTest>& systems,
                                                unsigned workers = 1) {
  const auto groups = group_by_template(corpus);
  std::vector<std::pair<const SystemUnderTest*, const std::vector<TaskInstance>*>> jobs;
  for (const auto& s : systems)
    for (const auto& [k, g] : groups)
      if (supports(s, g.front().kind)) jobs.emplace_back(&s, &g);
  std::vector<TaskResult> out(jobs.size());
  std::vector<std::exception_ptr> errs(jobs.size());
  auto run = [&](std::size_t i) {
    try {
      out[i] = evaluate_task(*jobs[i].second, *jobs[i].first);
    } catch (...) {
      errs[i] = std::current_exception();
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) run(i);
      });
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

// Templates are averaged within each task, then tasks are averaged with
// equal weight per (system, metric).
inline EvalReport aggregate(const std::vector<TaskResult>& results) {
  if (results.empty()) throw PreconditionError("aggregate needs at least one result");
  EvalReport rep;
  std::vector<std::string> system_order;
  for (const auto& r : results)
    if (std::find(system_order.begin(), system_order.end(), r.system) == system_order.end())
      system_order.push_back(r.system);
  auto rank = [&](const std::string& s) {
    return std::find(system_order.begin(), system_order.end(), s) - system_order.begin();
  };
  rep.per_task = results;
  std::stable_sort(rep.per_task.begin(), rep.per_task.end(), [&](const auto& a, const auto& b) {
    return std::tuple(rank(a.system), a.task_id, a.template_id) < std::tuple(rank(b.system), b.task_id, b.template_id);
  });

  for (std::size_t i = 0; i < rep.per_task.size();) {
    std::size_t j = i;
    double sum = 0;
    while (j < rep.per_task.size() && rep.per_task[j].system == rep.per_task[i].system &&
           rep.per_task[j].task_id == rep.per_task[i].task_id) {
      if (rep.per_task[j].metric != rep.per_task[i].metric)
        throw PreconditionError("task '" + rep.per_task[i].task_id + "' mixes metrics");
      sum += rep.per_task[j].value;
      ++j;
    }
    rep.task_means.push_back({rep.per_task[i].system, rep.per_task[i].task_id, rep.per_task[i].metric,
                              sum / static_cast<double>(j - i), j - i});
    i = j;
  }

  for (const auto& sys : system_order) {
    for (auto metric : {MetricName::accuracy, MetricName::rouge_l}) {
      double sum = 0;
      std::size_t n = 0;
      for (const auto& t : rep.task_means)
        if (t.system == sys && t.metric == metric) {
          sum += t.value;
          ++n;
        }
      if (n) rep.macro.push_back({sys, metric, sum / static_cast<double>(n), n});
    }
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["fingerprint"] = r.fingerprint;
  j["ablation"] = r.ablation;
  j["per_task"] = nlohmann::ordered_json::array();
  for (const auto& t : r.per_task)
    j["per_task"].push_back({{"system", t.system},
                             {"task_id", t.task_id},
                             {"template_id", t.template_id},
                             {"metric", to_string(t.metric)},
                             {"value", t.value},
                             {"n_instances", t.n_instances}});
  j["task_means"] = nlohmann::ordered_json::array();
  for (const auto& t : r.task_means)
    j["task_means"].push_back({{"system", t.system},
                               {"task_id", t.task_id},
                               {"metric", to_string(t.metric)},
                               {"value", t.value},
                               {"n_templates", t.n_templates}});
  j["macro"] = nlohmann::ordered_json::array();
  for (const auto& m : r.macro)
    j["macro"].push_back(
        {{"system", m.system}, {"metric", to_string(m.metric)}, {"value", m.value}, {"n_tasks", m.n_tasks}});
  j["extras"] = r.extras;
  return j;
}

// Systems x (tasks..., macro) plain-text table. Accuracy shows as percent.
inline std::string render_table(const EvalReport& r) {
  std::vector<std::string> systems, tasks;
  for (const auto& t : r.task_means) {
    if (std::find(systems.begin(), systems.end(), t.system) == systems.end()) systems.push_back(t.system);
    if (std::find(tasks.begin(), tasks.end(), t.task_id) == tasks.end()) tasks.push_back(t.task_id);
  }
  std::sort(tasks.begin(), tasks.end());
  auto fmt = [](double v, MetricName m) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", m == MetricName::accuracy ? 100.0 * v : v);
    return std::string(buf);
  };
  std::vector<std::string> header{"system"};
  header.insert(header.end(), tasks.begin(), tasks.end());
  std::set<MetricName> metrics;
  for (const auto& m : r.macro) metrics.insert(m.metric);
  for (auto m : metrics) header.push_back("macro_" + std::string(to_string(m)));

  std::vector<std::vector<std::string>> rows{header};
  for (const auto& s : systems) {
    std::vector<std::string> row{s};
    for (const auto& t : tasks) {
      std::string cell = "-";
      for (const auto& tm : r.task_means)
        if (tm.system == s && tm.task_id == t) cell = fmt(tm.value, tm.metric);
      row.push_back(cell);
    }
    for (auto m : metrics) {
      std::string cell = "-";
      for (const auto& mr : r.macro)
        if (mr.system == s && mr.metric == m) cell = fmt(mr.value, m);
      row.push_back(cell);
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    for (std::size_t c = 0; c < rows[ri].size(); ++c) {
      if (c) os << "  ";
      const auto& cell = rows[ri][c];
      if (c == 0) {
        os << cell << std::string(width[c] - cell.size(), ' ');
      } else {
        os << std::string(width[c] - cell.size(), ' ') << cell;
      }
    }
    os << '\n';
    if (ri == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Adaptation

struct AblationFlags {
  bool no_augmentation = false;
  bool no_pretrained_base = false;
};

inline const std::vector<std::string>& default_systems() {
  static const std::vector<std::string> s{"sampling", "temperature", "top_k",     "nucleus",   "beam",
                                          "self_scoring", "random",  "cappy_pre", "cappy_post"};
  return s;
}

struct AdaptationSetup {
  Corpus train;
  Corpus test;
  GeneratorHandle backbone;                       // produces the evaluation pools
  std::vector<GeneratorHandle> augmenters;        // label the downstream data
  std::optional<ScorerModel> base;                // pretrained scorer, if any
  ConstructionConfig construction;
  TrainConfig finetune = TrainConfig::adaptation();
  AblationFlags ablation;
  std::vector<std::string> systems = default_systems();
  PoolSpec pool = default_pool_spec();
  std::vector<std::size_t> pool_sweep;            // e.g. {1, 4, 17}
  std::size_t random_seeds = 5;
  std::uint64_t feature_dim = kDefaultFeatureDim;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

struct AdaptationOutcome {
  EvalReport report;
  ScorerModel finetuned;
  std::vector<RegressionExample> downstream_data;
};

// Nested pools for the sample-count sweep: 1 and 4 nucleus samples, or the
// full 17-sample pool. Any other size n takes n nucleus samples.
inline PoolSpec pool_spec_for_size(std::size_t n) {
  if (n == 17) return default_pool_spec();
  return {{DecodingConfig::nucleus(0.95), n}};
}

inline std::uint64_t model_fingerprint(const ScorerModel& m) {
  std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(m.weights.data()),
                                           m.weights.size() * sizeof(float)));
  return mix64(h ^ fnv1a(std::string_view(reinterpret_cast<const char*>(&m.bias), sizeof(float))));
}

inline std::string hex64(std::uint64_t x) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

namespace detail {

inline SystemUnderTest make_system(const std::string& name, TaskKind kind, const AdaptationSetup& s,
                                   const std::shared_ptr<PoolProvider>& pool, const ScorerHandle& pre,
                                   const ScorerHandle& post, const ScorerHandle& oracle,
                                   const ScorerHandle& likelihood) {
  SystemUnderTest sys;
  sys.name = name;
  sys.seed = s.seed;
  sys.random_seeds = s.random_seeds;
  sys.generator = s.backbone;
  sys.pool = pool;
  const bool cls = kind == TaskKind::classification;
  sys.mode = cls ? SystemMode::classification_scorer : SystemMode::generation_select;
  if (name == "sampling" || name == "plain_sampling" || name == "temperature" || name == "top_k" ||
      name == "nucleus" || name == "beam") {
    sys.mode = SystemMode::generation_decode;
    sys.decoding = DecodingConfig::for_strategy(parse_strategy(name));
  } else if (name == "self_scoring") {
    sys.method = SelectionMethod::self_scoring;
    sys.scorer = likelihood;
  } else if (name == "random") {
    sys.method = SelectionMethod::random;
  } else if (name == "cappy_pre") {
    sys.scorer = pre;
  } else if (name == "cappy_post" || name == "cappy") {
    sys.scorer = post;
  } else if (name == "oracle") {
    sys.method = SelectionMethod::oracle;
    sys.scorer = oracle;
  } else {
    throw ValidationError("unknown system '" + name + "'");
  }
  // Classification self-scoring goes through the likelihood scorer.
  if (cls && sys.method == SelectionMethod::self_scoring) sys.method = SelectionMethod::cappy;
  return sys;
}

inline void check_disjoint(const Corpus& train, const Corpus& test) {
  std::set<std::pair<std::string, std::string>> ids;
  for (const auto& i : train.instances()) ids.insert({i.task_id, i.instance_id});
  for (const auto& i : test.instances())
    if (ids.contains({i.task_id, i.instance_id}))
      throw ValidationError("train/test split overlap on instance (" + i.task_id + ", " + i.instance_id + ")");
}

}  // namespace detail

// Evaluates the listed systems on `test`, using scorers before and after
// finetuning. Both kinds of task are supported; decode baselines are
// skipped on classification tasks.
inline std::vector<TaskResult> evaluate_named_systems(const AdaptationSetup& s, const Corpus& test,
                                                      const std::vector<std::string>& names,
                                                      const std::shared_ptr<PoolProvider>& pool,
                                                      const ScorerHandle& pre, const ScorerHandle& post,
                                                      const ScorerHandle& oracle, const ScorerHandle& likelihood,
                                                      const std::string& suffix = "") {
  std::vector<SystemUnderTest> gen_systems, cls_systems;
  for (const auto& n : names) {
    auto g = detail::make_system(n, TaskKind::generation, s, pool, pre, post, oracle, likelihood);
    auto c = detail::make_system(n, TaskKind::classification, s, pool, pre, post, oracle, likelihood);
    g.name += suffix;
    c.name += suffix;
    gen_systems.push_back(std::move(g));
    if (supports(c, TaskKind::classification)) cls_systems.push_back(std::move(c));
  }
  std::vector<TaskInstance> gen, cls;
  for (const auto& i : test.instances()) (i.kind == TaskKind::generation ? gen : cls).push_back(i);
  std::vector<TaskResult> out;
  // Keep system-major order across both kinds.
  const auto gen_results = gen.empty() ? std::vector<TaskResult>{} : evaluate_systems(Corpus(gen), gen_systems, s.workers);
  const auto cls_results = cls.empty() ? std::vector<TaskResult>{} : evaluate_systems(Corpus(cls), cls_systems, s.workers);
  for (const auto& n : names) {
    for (const auto& r : gen_results)
      if (r.system == n + suffix) out.push_back(r);
    for (const auto& r : cls_results)
      if (r.system == n + suffix) out.push_back(r);
  }
  return out;
}

// Builds downstream regression data from the train split, finetunes the
// scorer on it and evaluates baselines and both scorers on the test split.
inline AdaptationOutcome run_adaptation(const AdaptationSetup& s) {
  detail::check_disjoint(s.train, s.test);
  if (!s.backbone) throw PreconditionError("adaptation needs a backbone generator");
  if (s.test.empty()) throw PreconditionError("adaptation needs a non-empty test split");

  auto cc = s.construction;
  if (s.ablation.no_augmentation) cc.enable_augmentation = false;
  auto built = build_dataset(s.train, cc, s.augmenters, s.workers);
  if (built.examples.empty()) throw PreconditionError("downstream construction produced no examples");

  const bool fresh = s.ablation.no_pretrained_base || !s.base;
  ScorerModel base = fresh ? ScorerModel::fresh(s.feature_dim) : *s.base;
  const std::uint64_t base_fp = model_fingerprint(base);
  auto tuned = train(base, built.examples, s.finetune);

  ReferenceMap refs = reference_map(s.test);
  auto pool = std::make_shared<PoolProvider>(s.backbone, s.pool, s.seed);
  auto pre = std::make_shared<LinearScorer>(base);
  auto post = std::make_shared<LinearScorer>(tuned.model);
  auto oracle = std::make_shared<OracleScorer>(refs);
  auto likelihood = std::make_shared<LikelihoodScorer>(s.backbone);

  auto results = evaluate_named_systems(s, s.test, s.systems, pool, pre, post, oracle, likelihood);
  AdaptationOutcome out{aggregate(results), tuned.model, built.examples};
  auto& rep = out.report;

  if (!s.pool_sweep.empty()) {
    nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
    Corpus gen_test = [&] {
      std::vector<TaskInstance> g;
      for (const auto& i : s.test.instances())
        if (i.kind == TaskKind::generation) g.push_back(i);
      return Corpus(std::move(g));
    }();
    if (!gen_test.empty()) {
      for (auto n : s.pool_sweep) {
        auto p = std::make_shared<PoolProvider>(s.backbone, pool_spec_for_size(n), s.seed);
        auto res = evaluate_named_systems(s, gen_test, {"oracle", "self_scoring", "cappy_post"}, p, pre, post,
                                          oracle, likelihood);
        auto agg = aggregate(res);
        for (const auto& m : agg.macro)
          sweep.push_back({{"pool_size", n}, {"system", m.system}, {"value", m.value}});
      }
    }
    rep.extras["pool_sweep"] = sweep;
  }

  const auto summary = summarize(built.examples);
  rep.fingerprint["seed"] = s.seed;
  rep.fingerprint["featurizer_version"] = kFeaturizerVersion;
  rep.fingerprint["stub_recipe_version"] = kStubRecipeVersion;
  rep.fingerprint["feature_dim"] = s.feature_dim;
  rep.fingerprint["construction_hash"] = hex64(fnv1a(to_json(cc).dump()));
  rep.fingerprint["finetune_hash"] = hex64(fnv1a(to_json(s.finetune).dump()));
  rep.fingerprint["scorer_init"] = fresh ? "fresh" : "pretrained";
  rep.fingerprint["base_model_hash"] = hex64(base_fp);
  rep.fingerprint["finetuned_model_hash"] = hex64(model_fingerprint(tuned.model));
  rep.fingerprint["downstream_label_set"] = std::vector<double>(summary.label_set.begin(), summary.label_set.end());
  rep.fingerprint["downstream_label_set_truncated"] = summary.label_set_truncated;
  rep.ablation["no_augmentation"] = s.ablation.no_augmentation;
  rep.ablation["no_pretrained_base"] = s.ablation.no_pretrained_base;
  rep.extras["construction"] = construction_report(built);
  rep.extras["finetune_final_loss"] = tuned.loss_history.empty() ? 0.0 : tuned.loss_history.back();
  return out;
}

// ---------------------------------------------------------------------------
// Declarative experiments

struct ExperimentResult {
  EvalReport report;
  std::string table;
  ScorerModel finetuned;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw ValidationError((where.empty() ? "" : where + ".") + k + ": unknown field");
  }
}

template <typename Fn>
auto at_path(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.starts_with(path + ".") || msg.starts_with(path + ":")) throw;
    throw ValidationError(path + ": " + msg);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace detail

// Runs pretraining (optional), construction, finetuning, selection and
// aggregation from one JSON config. Relative paths resolve against the
// config's directory.
inline ExperimentResult run_experiment(const nlohmann::json& cfg, const std::filesystem::path& base_dir = ".") {
  detail::check_keys(cfg, "", {"seed", "train_corpus", "test_corpus", "pretrain_corpus", "base_checkpoint",
                               "feature_dim", "backbone", "augmentation_generators", "construction", "pretrain",
                               "finetune", "ablation", "systems", "pool_sweep", "random_seeds", "dataset_cap",
                               "workers", "name"});
  auto path_of = [&](const char* field) -> std::string {
    return detail::at_path(field, [&] {
      if (!cfg.contains(field) || !cfg[field].is_string()) throw ValidationError("required string path");
      std::filesystem::path p = cfg[field].get<std::string>();
      return (p.is_absolute() ? p : base_dir / p).string();
    });
  };

  AdaptationSetup s;
  s.seed = detail::at_path("seed", [&] { return cfg.value("seed", std::uint64_t{0}); });
  s.feature_dim = detail::at_path("feature_dim", [&] {
    auto d = cfg.value("feature_dim", kDefaultFeatureDim);
    if (d == 0 || !std::has_single_bit(d)) throw ValidationError("must be a power of two");
    return d;
  });
  s.random_seeds = detail::at_path("random_seeds", [&] {
    auto n = cfg.value("random_seeds", std::size_t{5});
    if (n == 0) throw ValidationError("must be positive");
    return n;
  });
  s.workers = detail::at_path("workers", [&] { return std::max(1u, cfg.value("workers", 1u)); });
  const std::size_t cap =
      detail::at_path("dataset_cap", [&] { return cfg.value("dataset_cap", kDefaultDatasetCap); });
  if (cap == 0) throw ValidationError("dataset_cap: must be positive");

  auto load = [&](const char* field) { return cap_corpus(load_tasks(path_of(field), s.seed), cap, s.seed); };
  s.train = load("train_corpus");
  s.test = load("test_corpus");
  std::optional<Corpus> pretrain;
  if (cfg.contains("pretrain_corpus")) pretrain = load("pretrain_corpus");

  ReferenceMap refs;
  for (const Corpus* c : {&s.train, &s.test, pretrain ? &*pretrain : nullptr})
    if (c)
      for (const auto& [k, v] : reference_map(*c)) refs.emplace(k, v);

  s.backbone = detail::at_path("backbone", [&] {
    return make_generator(cfg.value("backbone", nlohmann::json{{"backend", "stub"}}), refs);
  });
  s.augmenters = detail::at_path("augmentation_generators", [&] {
    std::vector<GeneratorHandle> gs;
    const auto j = cfg.value("augmentation_generators",
                             nlohmann::json::array({{{"backend", "stub"}, {"seed", 101}},
                                                    {{"backend", "stub"}, {"seed", 202}}}));
    if (!j.is_array()) throw ValidationError("must be an array");
    for (const auto& g : j) gs.push_back(make_generator(g, refs));
    return gs;
  });
  s.construction = detail::at_path("construction", [&] {
    auto c = construction_from_json(cfg.value("construction", nlohmann::json::object()));
    if (!cfg.contains("construction") || !cfg["construction"].contains("seed")) c.seed = s.seed;
    return c;
  });
  s.finetune = detail::at_path("finetune", [&] {
    auto c = train_config_from_json(cfg.value("finetune", nlohmann::json::object()), TrainConfig::adaptation());
    if (!cfg.contains("finetune") || !cfg["finetune"].contains("seed")) c.seed = s.seed;
    return c;
  });
  const auto pretrain_cfg = detail::at_path("pretrain", [&] {
    auto c = train_config_from_json(cfg.value("pretrain", nlohmann::json::object()), TrainConfig::pretraining());
    if (!cfg.contains("pretrain") || !cfg["pretrain"].contains("seed")) c.seed = s.seed;
    return c;
  });
  s.ablation = detail::at_path("ablation", [&] {
    const auto j = cfg.value("ablation", nlohmann::json::object());
    detail::check_keys(j, "ablation", {"no_augmentation", "no_pretrained_base"});
    return AblationFlags{j.value("no_augmentation", false), j.value("no_pretrained_base", false)};
  });
  s.systems = detail::at_path("systems", [&] {
    auto v = cfg.value("systems", default_systems());
    if (v.empty()) throw ValidationError("must list at least one system");
    for (const auto& n : v) (void)detail::make_system(n, TaskKind::generation, s, nullptr, nullptr, nullptr, nullptr, nullptr);
    return v;
  });
  s.pool_sweep = detail::at_path("pool_sweep", [&] { return cfg.value("pool_sweep", std::vector<std::size_t>{}); });

  nlohmann::ordered_json base_info;
  if (!s.ablation.no_pretrained_base) {
    if (cfg.contains("base_checkpoint")) {
      auto ck = load_checkpoint(path_of("base_checkpoint"));
      if (ck.model.feature_dim != s.feature_dim)
        throw ValidationError("base_checkpoint: feature_dim " + std::to_string(ck.model.feature_dim) +
                              " does not match feature_dim " + std::to_string(s.feature_dim));
      base_info["source"] = "checkpoint";
      base_info["featurizer_mismatch"] = ck.featurizer_mismatch;
      s.base = std::move(ck.model);
    } else if (pretrain) {
      auto pc = s.construction;
      if (s.ablation.no_augmentation) pc.enable_augmentation = false;
      auto built = build_dataset(*pretrain, pc, s.augmenters, s.workers);
      auto trained = train(ScorerModel::fresh(s.feature_dim), built.examples, pretrain_cfg);
      base_info["source"] = "pretrain_corpus";
      base_info["examples"] = built.examples.size();
      base_info["pretrain_hash"] = hex64(fnv1a(to_json(pretrain_cfg).dump()));
      base_info["final_loss"] = trained.loss_history.empty() ? 0.0 : trained.loss_history.back();
      s.base = std::move(trained.model);
    }
  }

  auto out = run_adaptation(s);
  out.report.fingerprint["name"] = cfg.value("name", "");
  out.report.extras["base"] = base_info.empty() ? nlohmann::ordered_json::object() : base_info;
  ExperimentResult r{std::move(out.report), {}, std::move(out.finetuned)};
  r.table = render_table(r.report);
  return r;
}

inline ExperimentResult run_experiment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment config '" + path + "'");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("experiment config '") + path + "': " + e.what());
  }
  return run_experiment(cfg, std::filesystem::path(path).parent_path());
}

}  // namespace capy
