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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and runtime limits are fixed below.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "capy/capy.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace capy;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += "; runtime limit exceeded";
  }
  char limit[32] = "none";
  if (limit_s > 0) std::snprintf(limit, sizeof limit, "%.0fs", limit_s);
  std::printf("%s  %d. %s  [%.2fs, limit %s]  %s\n", o.pass ? "PASS" : "FAIL", id, title, secs, limit,
              o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const std::string kData = CAPY_DATA_DIR;
const std::string kToyConfig = std::string(CAPY_CONFIG_DIR) + "/toy_experiment.json";

std::optional<double> macro(const EvalReport& r, const std::string& system, MetricName metric) {
  for (const auto& m : r.macro)
    if (m.system == system && m.metric == metric) return m.value;
  return std::nullopt;
}

nlohmann::json toy_config() {
  std::ifstream in(kToyConfig);
  return nlohmann::json::parse(in);
}

// 1. Rouge-L against subsequence enumeration.
Outcome rouge_oracle() {
  Rng rng(derive_seed(1, std::string_view("acceptance-rouge")));
  std::size_t lcs_bad = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    rouge::TokenSequence a(rng.uniform_index(13)), b(rng.uniform_index(13));
    for (auto& t : a) t = std::string(1, static_cast<char>('a' + rng.uniform_index(5)));
    for (auto& t : b) t = std::string(1, static_cast<char>('a' + rng.uniform_index(5)));
    const auto expected = oracle::lcs_enumerate(a, b);
    if (rouge::lcs_length(a, b) != expected) ++lcs_bad;
    const auto s = rouge::rouge_l_tokens(a, b);
    worst = std::max(worst, std::abs(s.f1 - oracle::f1_formula(expected, a.size(), b.size())));
  }
  return {lcs_bad == 0 && worst <= 1e-12,
          "lcs mismatches " + std::to_string(lcs_bad) + "/1000, max |f1 err| " + fmt("%.3g", worst) + " (tol 1e-12)"};
}

// 2. Construction invariants on the bundled toy corpus.
Outcome construction_invariants() {
  const auto corpus = load_tasks(kData + "/toy_train.jsonl");
  std::map<std::string, std::pair<TaskKind, std::size_t>> tasks;
  for (const auto& t : corpus.instances()) {
    tasks[t.task_id].first = t.kind;
    ++tasks[t.task_id].second;
  }
  std::size_t n_cls = 0, n_gen = 0;
  for (const auto& [id, v] : tasks)
    if (v.second >= 20) ++(v.first == TaskKind::classification ? n_cls : n_gen);
  if (n_cls < 3 || n_gen < 3)
    return {false, "toy corpus has " + std::to_string(n_cls) + " classification and " + std::to_string(n_gen) +
                       " generation tasks with >= 20 instances"};

  const ReferenceMap refs = reference_map(corpus);
  const std::vector<GeneratorHandle> gens{std::make_shared<StubGenerator>(refs, 101),
                                          std::make_shared<StubGenerator>(refs, 202)};
  ConstructionConfig cfg;
  cfg.seed = 7;
  const auto out = build_dataset(corpus, cfg, gens, 4);
  std::map<InstanceKey, const TaskInstance*> by_key;
  for (const auto& t : corpus.instances()) by_key[t.key()] = &t;

  std::size_t bad = 0;
  double worst = 0.0;
  std::set<double> interior;
  for (const auto& r : out.examples) {
    const auto& src = *by_key.at(r.source_instance);
    switch (r.provenance) {
      case Provenance::ground_truth: bad += r.score != 1.0; break;
      case Provenance::incorrect_choice:
      case Provenance::mismatch: bad += r.score != 0.0; break;
      case Provenance::augmented: {
        const auto c = rouge::tokenize(r.response), g = rouge::tokenize(src.ground_truth);
        const double f1 = oracle::f1_formula(oracle::lcs_recursive(c, g), c.size(), g.size());
        worst = std::max(worst, std::abs(f1 - r.score));
        if (r.score > 0.0 && r.score < 1.0) interior.insert(r.score);
        break;
      }
    }
  }
  return {bad == 0 && worst <= 1e-9 && interior.size() >= 5,
          std::to_string(out.examples.size()) + " rows, " + std::to_string(bad) +
              " fixed-label violations, max augmented |err| " + fmt("%.3g", worst) + " (tol 1e-9), " +
              std::to_string(interior.size()) + " distinct interior scores (need >= 5)"};
}

// 3. Ablation structure read back from report fingerprints.
Outcome ablation_structure() {
  auto cfg = toy_config();
  cfg["systems"] = {"random", "cappy_post"};
  cfg["pool_sweep"] = nlohmann::json::array();
  cfg["pretrain"]["total_steps"] = 50;
  cfg["finetune"]["total_steps"] = 20;

  auto no_aug = cfg;
  no_aug["ablation"] = {{"no_augmentation", true}, {"no_pretrained_base", false}};
  const auto a = run_experiment(no_aug, std::filesystem::path(kToyConfig).parent_path()).report;
  const bool labels_binary =
      a.fingerprint["downstream_label_set"] == nlohmann::ordered_json::array({0.0, 1.0}) &&
      !a.fingerprint["downstream_label_set_truncated"].get<bool>() && a.ablation["no_augmentation"].get<bool>();

  auto no_base = cfg;
  no_base["ablation"] = {{"no_augmentation", false}, {"no_pretrained_base", true}};
  const auto b = run_experiment(no_base, std::filesystem::path(kToyConfig).parent_path()).report;
  const auto fresh_hash = hex64(model_fingerprint(ScorerModel::fresh(cfg["feature_dim"].get<std::uint64_t>())));
  const bool fresh = b.fingerprint["scorer_init"] == "fresh" && b.fingerprint["base_model_hash"] == fresh_hash &&
                     b.ablation["no_pretrained_base"].get<bool>();

  const auto full = run_experiment(cfg, std::filesystem::path(kToyConfig).parent_path()).report;
  const bool control = full.fingerprint["scorer_init"] == "pretrained" && full.fingerprint["base_model_hash"] != fresh_hash &&
                       full.fingerprint["downstream_label_set"].size() > 2;

  return {labels_binary && fresh && control,
          "no_augmentation label set " + a.fingerprint["downstream_label_set"].dump() + "; no_pretrained_base init " +
              b.fingerprint["scorer_init"].get<std::string>() + " (base hash " +
              (b.fingerprint["base_model_hash"] == fresh_hash ? "matches" : "differs from") +
              " fresh); unablated init " + full.fingerprint["scorer_init"].get<std::string>()};
}

// 4. Analytic vs finite-difference gradients.
Outcome gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    worst = std::max(worst, fixture::gradient_relative_error(fixture::random_gradient_case(seed), 1e-5));
  return {worst <= 1e-3, "max relative error " + fmt("%.3g", worst) + " over 100 cases (tol 1e-3, h 1e-5)"};
}

// 5. Training on the separable synthetic set.
Outcome training_sanity() {
  const auto rows = fixture::separable_set(200, 1);
  const auto held = fixture::separable_set(200, 2);
  const auto cfg = fixture::separable_config();
  const auto a = train(ScorerModel::fresh(fixture::kSeparableDim), rows, cfg);
  const auto b = train(ScorerModel::fresh(fixture::kSeparableDim), rows, cfg);
  const auto data = featurize_dataset(rows, fixture::kSeparableDim);
  const double loss = loss_and_grad(a.model, std::span<const TrainingPair>(data)).first;
  const double auc = fixture::held_out_auc(a.model, held);
  const bool same = a.model == b.model;
  return {cfg.total_steps <= 2000 && loss < 0.05 && auc >= 0.95 && same,
          "final loss " + fmt("%.4f", loss) + " after " + std::to_string(cfg.total_steps) + " steps (need < 0.05), AUC " +
              fmt("%.4f", auc) + " (need >= 0.95), repeat run " + (same ? "bit-identical" : "DIFFERS")};
}

// 6. Selection properties.
Outcome selection_properties() {
  const auto test = load_tasks(kData + "/toy_test.jsonl");
  const auto refs = reference_map(test);
  const StubGenerator gen(refs, 0);
  const OracleScorer oracle(refs);
  std::size_t checked = 0, misses = 0, wrong_size = 0;
  for (const auto& inst : test.instances()) {
    if (inst.kind != TaskKind::generation) continue;
    const auto pool = collect_candidate_pool(gen, inst.instruction, derive_seed(7, std::string_view(inst.instance_id)));
    wrong_size += pool.size() != 17;
    double best = 0.0;
    for (const auto& c : pool) best = std::max(best, rouge::rouge_l(c.text, inst.ground_truth).f1);
    const auto r = select_generation(inst.instruction, pool, oracle, SelectionMethod::oracle);
    misses += rouge::rouge_l(r.chosen_text, inst.ground_truth).f1 != best;
    ++checked;
  }

  Rng rng(derive_seed(6, std::string_view("acceptance-argmax")));
  std::size_t flips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t salt = rng.next();
    auto base = [salt](const std::string&, const std::string& r) {
      return Rng(derive_seed(salt, std::string_view(r))).uniform01();
    };
    const FunctionScorer plain(base);
    const FunctionScorer cubed([base](const std::string& i, const std::string& r) { return std::pow(base(i, r), 3); });
    std::vector<Candidate> pool;
    const std::size_t n = 1 + rng.uniform_index(17);
    for (std::size_t k = 0; k < n; ++k)
      pool.push_back(Candidate{"candidate " + std::to_string(rng.uniform_index(1000)), std::nullopt, {}, 0});
    flips += select_generation("q", pool, plain).chosen_index != select_generation("q", pool, cubed).chosen_index;
  }
  const auto spec = default_pool_spec();
  std::size_t spec_size = 0;
  for (const auto& e : spec) spec_size += e.n;
  return {checked > 0 && misses == 0 && flips == 0 && wrong_size == 0 && spec_size == 17,
          "oracle misses " + std::to_string(misses) + "/" + std::to_string(checked) + ", argmax flips under x^3 " +
              std::to_string(flips) + "/1000, pool size " + std::to_string(spec_size)};
}

// 7. Rouge-L over nested pools with the oracle scorer.
Outcome pool_trend() {
  const auto test = load_tasks(kData + "/toy_test.jsonl");
  std::vector<TaskInstance> gen_only;
  for (const auto& i : test.instances())
    if (i.kind == TaskKind::generation) gen_only.push_back(i);
  const Corpus corpus(gen_only);
  const auto refs = reference_map(corpus);
  const auto backbone = std::make_shared<StubGenerator>(refs, 0);
  const auto oracle = std::make_shared<OracleScorer>(refs);
  std::vector<double> means;
  std::vector<std::shared_ptr<PoolProvider>> providers;
  for (std::size_t n : {1, 4, 17}) {
    auto p = std::make_shared<PoolProvider>(backbone, pool_spec_for_size(n), 7);
    providers.push_back(p);
    SystemUnderTest sys;
    sys.name = "oracle@" + std::to_string(n);
    sys.method = SelectionMethod::oracle;
    sys.scorer = oracle;
    sys.pool = p;
    means.push_back(*aggregate(evaluate_systems(corpus, {sys})).macro_of(sys.name));
  }
  // Per-instance superset property: each larger pool contains the smaller.
  std::size_t broken = 0;
  for (const auto& inst : corpus.instances()) {
    const auto p1 = providers[0]->pool(inst), p4 = providers[1]->pool(inst), p17 = providers[2]->pool(inst);
    auto contains = [](const std::vector<Candidate>& big, const std::vector<Candidate>& small) {
      for (const auto& c : small)
        if (std::none_of(big.begin(), big.end(), [&](const Candidate& b) { return b.text == c.text; })) return false;
      return true;
    };
    broken += !contains(p4, p1) || !contains(p17, p4);
  }
  const bool monotone = means[0] <= means[1] && means[1] <= means[2];
  return {monotone && broken == 0, "mean Rouge-L " + fmt("%.2f", means[0]) + " -> " + fmt("%.2f", means[1]) + " -> " +
                                       fmt("%.2f", means[2]) + " for pools 1/4/17, superset violations " +
                                       std::to_string(broken)};
}

// 8. Adaptation beats the random control and does not regress the scorer.
std::string g_report_a;
Outcome adaptation_win() {
  const auto cfg = toy_config();
  const auto& ft = cfg["finetune"];
  const bool defaults = ft["total_steps"] == 400 && ft["learning_rate"].get<double>() == 2e-5 && ft["batch_size"] == 256 &&
                        cfg["random_seeds"] == 5;
  const auto r = run_experiment(cfg, std::filesystem::path(kToyConfig).parent_path());
  g_report_a = to_json(r.report).dump();
  const auto post = macro(r.report, "cappy_post", MetricName::rouge_l);
  const auto pre = macro(r.report, "cappy_pre", MetricName::rouge_l);
  const auto rnd = macro(r.report, "random", MetricName::rouge_l);
  if (!post || !pre || !rnd) return {false, "report lacks generation rows for cappy_pre/cappy_post/random"};
  return {defaults && *post > *rnd && *post >= *pre,
          "Rouge-L cappy_post " + fmt("%.2f", *post) + " vs random(5 seeds) " + fmt("%.2f", *rnd) + " and cappy_pre " +
              fmt("%.2f", *pre) + (defaults ? "" : "; config does not use 400 steps / lr 2e-5 / batch 256")};
}

// 9. Byte-identical reports on rerun.
Outcome determinism() {
  const auto cfg = toy_config();
  if (g_report_a.empty()) g_report_a = to_json(run_experiment(cfg, std::filesystem::path(kToyConfig).parent_path()).report).dump();
  const auto b = to_json(run_experiment(cfg, std::filesystem::path(kToyConfig).parent_path()).report).dump();
  return {g_report_a == b, std::to_string(b.size()) + "-byte reports " + (g_report_a == b ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  criterion(1, "Rouge-L oracle equivalence", 5, rouge_oracle);
  criterion(2, "Construction invariants", 10, construction_invariants);
  criterion(3, "Ablation structure", 0, ablation_structure);
  criterion(4, "Gradient correctness", 10, gradient_check);
  criterion(5, "Training sanity", 30, training_sanity);
  criterion(6, "Selection properties", 0, selection_properties);
  criterion(7, "Pool-size trend", 30, pool_trend);
  criterion(8, "End-to-end adaptation win", 120, adaptation_win);
  criterion(9, "End-to-end determinism", 0, determinism);
  std::printf("%d of 9 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
