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

// Command-line front end. Every subcommand is a thin shell over the library.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "capy/capy.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool g_pretty = false;

void emit(const ordered_json& j) { std::cout << (g_pretty ? j.dump(2) : j.dump()) << '\n'; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw capy::IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw capy::ParseError("'" + path + "': " + e.what());
  }
}

std::string fixed4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

struct BuildDataArgs {
  std::string corpus, config, out, report;
  std::uint64_t seed = 0;
  std::size_t cap = capy::kDefaultDatasetCap;
  unsigned workers = 1;
};

int build_data(const BuildDataArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  json gens = json::array({{{"backend", "stub"}, {"seed", 101}}, {{"backend", "stub"}, {"seed", 202}}});
  if (cfg.contains("generators")) {
    gens = cfg["generators"];
    cfg.erase("generators");
  }
  auto cc = capy::construction_from_json(cfg);
  cc.seed = a.seed;
  const auto corpus = capy::cap_corpus(capy::load_tasks(a.corpus, a.seed), a.cap, a.seed);
  const auto refs = capy::reference_map(corpus);
  std::vector<capy::GeneratorHandle> generators;
  for (const auto& g : gens) generators.push_back(capy::make_generator(g, refs));
  auto outcome = capy::build_dataset(corpus, cc, generators, a.workers);
  capy::write_regression_dataset(outcome.examples, a.out);
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& e : outcome.errors) std::cerr << "skipped: " << e << '\n';
  auto rep = capy::construction_report(outcome);
  rep["seed"] = a.seed;
  rep["construction"] = capy::to_json(cc);
  if (!a.report.empty()) {
    std::ofstream r(a.report);
    if (!r) throw capy::IoError("cannot open '" + a.report + "' for writing");
    r << rep.dump(2) << '\n';
  }
  emit(rep);
  return 0;
}

struct TrainArgs {
  std::string data, out, config, init, preset = "pretraining";
  std::optional<std::uint64_t> seed;
  std::uint64_t feature_dim = capy::kDefaultFeatureDim;
  std::optional<std::size_t> steps, batch_size;
  std::optional<double> lr;
  bool save_optimizer = false;
};

int train(const TrainArgs& a) {
  auto tc = a.preset == "adaptation" ? capy::TrainConfig::adaptation() : capy::TrainConfig::pretraining();
  if (!a.config.empty()) tc = capy::train_config_from_json(read_json_file(a.config), tc);
  if (a.seed) tc.seed = *a.seed;
  if (a.steps) tc.total_steps = *a.steps;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.learning_rate = *a.lr;
  tc.validate();
  const auto rows = capy::read_regression_dataset(a.data);
  capy::ScorerModel model = capy::ScorerModel::fresh(a.feature_dim);
  if (!a.init.empty()) {
    auto ck = capy::load_checkpoint(a.init);
    if (ck.featurizer_mismatch) std::cerr << "warning: '" << a.init << "' was written by another featurizer version\n";
    model = std::move(ck.model);
  }
  auto r = capy::train(std::move(model), rows, tc);
  ordered_json prov;
  prov["train_config"] = capy::to_json(tc);
  prov["data"] = a.data;
  prov["examples"] = rows.size();
  prov["featurizer_version"] = capy::kFeaturizerVersion;
  prov["init"] = a.init.empty() ? "fresh" : a.init;
  capy::save_checkpoint(r.model, a.save_optimizer ? &r.state : nullptr, a.out, &prov);
  ordered_json j;
  j["checkpoint"] = a.out;
  j["steps"] = tc.total_steps;
  j["seed"] = tc.seed;
  j["final_loss"] = r.loss_history.empty() ? 0.0 : r.loss_history.back();
  emit(j);
  return 0;
}

std::shared_ptr<const capy::Scorer> scorer_from(const std::string& checkpoint, const std::string& remote) {
  if (!remote.empty()) {
    capy::RemoteScorerOptions o;
    o.endpoint = remote;
    return std::make_shared<capy::RemoteScorer>(std::move(o));
  }
  if (checkpoint.empty()) throw capy::PreconditionError("need --checkpoint or --remote");
  auto ck = capy::load_checkpoint(checkpoint);
  if (ck.featurizer_mismatch) std::cerr << "warning: '" << checkpoint << "' was written by another featurizer version\n";
  return std::make_shared<capy::LinearScorer>(std::move(ck.model));
}

struct ScoreArgs {
  std::string checkpoint, remote, instruction, response, input;
  bool have_pair = false;
};

int score(const ScoreArgs& a) {
  auto scorer = scorer_from(a.checkpoint, a.remote);
  if (!a.input.empty()) {
    capy::for_each_jsonl(a.input, [&](const json& j, std::size_t line) {
      const auto ins = capy::detail::require_string(j, "instruction", line);
      const auto res = capy::detail::require_string(j, "response", line);
      ordered_json o;
      o["instruction"] = ins;
      o["response"] = res;
      o["score"] = scorer->score(ins, res).value();
      std::cout << o.dump() << '\n';
    });
    return 0;
  }
  std::cout << fixed4(scorer->score(a.instruction, a.response).value()) << '\n';
  return 0;
}

struct SelectArgs {
  std::string instruction, candidates, checkpoint, remote, method = "cappy", norm = "mean";
  std::uint64_t seed = 0;
};

int select(const SelectArgs& a) {
  std::vector<capy::Candidate> cands;
  capy::for_each_jsonl(a.candidates, [&](const json& j, std::size_t line) {
    capy::Candidate c;
    c.text = capy::detail::require_string(j, "text", line);
    if (auto it = j.find("token_logprobs"); it != j.end() && !it->is_null())
      c.token_logprobs = it->get<std::vector<double>>();
    c.rank_in_origin = cands.size();
    cands.push_back(std::move(c));
  });
  if (cands.empty()) throw capy::PreconditionError("candidates file '" + a.candidates + "' is empty");
  capy::SelectionResult r;
  if (a.method == "random") {
    r = capy::random_select(cands, a.seed);
  } else if (a.method == "self_scoring") {
    const bool all = std::all_of(cands.begin(), cands.end(), [](const auto& c) { return c.token_logprobs.has_value(); });
    std::shared_ptr<const capy::Generator> gen;
    if (!all) gen = std::make_shared<capy::HttpGenerator>(capy::HttpGenerator::from_env());
    else gen = std::make_shared<capy::ScriptedGenerator>(std::unordered_map<std::string, std::vector<capy::ScriptedCandidate>>{});
    r = capy::self_score_select(a.instruction, cands, *gen,
                                a.norm == "sum" ? capy::LikelihoodNormalization::sum : capy::LikelihoodNormalization::mean);
  } else {
    r = capy::select_generation(a.instruction, cands, *scorer_from(a.checkpoint, a.remote));
  }
  auto j = capy::to_json(r);
  j["seed"] = a.seed;
  emit(j);
  return 0;
}

struct EvalArgs {
  std::string config, out, table, save_checkpoint;
};

int eval(const EvalArgs& a) {
  auto r = capy::run_experiment_file(a.config);
  const auto j = capy::to_json(r.report);
  if (!a.out.empty()) {
    std::ofstream o(a.out, std::ios::binary | std::ios::trunc);
    if (!o) throw capy::IoError("cannot open '" + a.out + "' for writing");
    o << j.dump(2) << '\n';
  }
  if (!a.table.empty()) {
    std::ofstream o(a.table, std::ios::trunc);
    if (!o) throw capy::IoError("cannot open '" + a.table + "' for writing");
    o << r.table;
  }
  if (!a.save_checkpoint.empty()) {
    ordered_json prov;
    prov["experiment"] = a.config;
    prov["fingerprint"] = r.report.fingerprint;
    capy::save_checkpoint(r.finetuned, nullptr, a.save_checkpoint, &prov);
  }
  if (g_pretty) std::cout << r.table;
  else std::cout << j.dump() << '\n';
  return 0;
}

int inspect(const std::string& data) {
  const auto rows = capy::read_regression_dataset(data);
  emit(capy::to_json(capy::summarize(rows)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capy: weakly-supervised response scoring and candidate selection"};
  app.require_subcommand(1);
  app.add_flag("--pretty", g_pretty, "Human-readable output");

  BuildDataArgs bd;
  auto* c_build = app.add_subcommand("build-data", "Construct a regression dataset from a task corpus");
  c_build->add_option("--corpus", bd.corpus, "Task JSONL")->required();
  c_build->add_option("--config", bd.config, "Construction config JSON");
  c_build->add_option("--out", bd.out, "Output regression JSONL")->required();
  c_build->add_option("--report", bd.report, "Write the construction summary here");
  c_build->add_option("--seed", bd.seed, "Seed")->capture_default_str();
  c_build->add_option("--cap", bd.cap, "Per-task instance cap")->capture_default_str();
  c_build->add_option("--workers", bd.workers, "Worker threads")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a scorer and write a checkpoint");
  c_train->add_option("--data", tr.data, "Regression JSONL")->required();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--config", tr.config, "Train config JSON");
  c_train->add_option("--preset", tr.preset, "pretraining | adaptation")
      ->check(CLI::IsMember({"pretraining", "adaptation"}))
      ->capture_default_str();
  c_train->add_option("--init", tr.init, "Start from this checkpoint");
  c_train->add_option("--seed", tr.seed, "Seed");
  c_train->add_option("--feature-dim", tr.feature_dim, "Hash space size (power of two)")->capture_default_str();
  c_train->add_option("--steps", tr.steps, "Total optimizer steps");
  c_train->add_option("--batch-size", tr.batch_size, "Examples per step");
  c_train->add_option("--lr", tr.lr, "Peak learning rate");
  c_train->add_flag("--save-optimizer", tr.save_optimizer, "Store AdamW moments in the checkpoint");

  ScoreArgs sc;
  auto* c_score = app.add_subcommand("score", "Score (instruction, response) pairs");
  c_score->add_option("--checkpoint", sc.checkpoint, "Scorer checkpoint");
  c_score->add_option("--remote", sc.remote, "Remote scorer base URL");
  auto* o_ins = c_score->add_option("--instruction", sc.instruction, "Instruction text");
  auto* o_res = c_score->add_option("--response", sc.response, "Response text");
  auto* o_in = c_score->add_option("--input", sc.input, "JSONL of {instruction, response}");
  o_ins->needs(o_res);
  o_res->needs(o_ins);
  o_in->excludes(o_ins)->excludes(o_res);

  SelectArgs se;
  auto* c_select = app.add_subcommand("select", "Pick the best candidate for an instruction");
  c_select->add_option("--instruction", se.instruction, "Instruction text")->required();
  c_select->add_option("--candidates", se.candidates, "JSONL of {text, token_logprobs?}")->required();
  c_select->add_option("--checkpoint", se.checkpoint, "Scorer checkpoint");
  c_select->add_option("--remote", se.remote, "Remote scorer base URL");
  c_select->add_option("--method", se.method, "cappy | self_scoring | random")
      ->check(CLI::IsMember({"cappy", "self_scoring", "random"}))
      ->capture_default_str();
  c_select->add_option("--normalization", se.norm, "Self-scoring: mean | sum")
      ->check(CLI::IsMember({"mean", "sum"}))
      ->capture_default_str();
  c_select->add_option("--seed", se.seed, "Seed for random selection")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Run an experiment config and report");
  c_eval->add_option("--config", ev.config, "Experiment config JSON")->required();
  c_eval->add_option("--out", ev.out, "Write the JSON report here");
  c_eval->add_option("--table", ev.table, "Write the rendered table here");

  EvalArgs ad;
  auto* c_adapt = app.add_subcommand("adapt", "Finetune on downstream data, evaluate, and save the scorer");
  c_adapt->add_option("--config", ad.config, "Experiment config JSON")->required();
  c_adapt->add_option("--out", ad.out, "Write the JSON report here");
  c_adapt->add_option("--table", ad.table, "Write the rendered table here");
  c_adapt->add_option("--save-checkpoint", ad.save_checkpoint, "Finetuned scorer checkpoint")->required();

  std::string inspect_data;
  auto* c_inspect = app.add_subcommand("inspect", "Summarize a regression dataset");
  c_inspect->add_option("--data", inspect_data, "Regression JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*c_build) return build_data(bd);
    if (*c_train) return train(tr);
    if (*c_score) {
      if (sc.input.empty() && (!*o_ins || !*o_res)) {
        std::cerr << "score: need --instruction and --response, or --input\n" << c_score->help();
        return 1;
      }
      return score(sc);
    }
    if (*c_select) return select(se);
    if (*c_eval) return eval(ev);
    if (*c_adapt) return eval(ad);
    if (*c_inspect) return inspect(inspect_data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
