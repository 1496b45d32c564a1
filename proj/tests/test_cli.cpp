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

// Drives the built `capy` binary as a subprocess.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "capy/scorer.hpp"

namespace capy {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CAPY_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("capy_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string file(const std::string& n) const { return (dir_ / n).string(); }
  static std::string data(const std::string& n) { return std::string(CAPY_DATA_DIR) + "/" + n; }

  fs::path dir_;
};

TEST_F(Cli, UnknownSubcommandExitsOne) { EXPECT_EQ(run("teleport").code, 1); }

TEST_F(Cli, MissingRequiredOptionExitsOne) { EXPECT_EQ(run("build-data --out x.jsonl").code, 1); }

TEST_F(Cli, BuildDataIsReproducible) {
  const auto a = file("a.jsonl"), b = file("b.jsonl");
  ASSERT_EQ(run("build-data --corpus " + data("toy_train.jsonl") + " --out " + a + " --seed 4").code, 0);
  ASSERT_EQ(run("build-data --corpus " + data("toy_train.jsonl") + " --out " + b + " --seed 4 --workers 3").code, 0);
  EXPECT_FALSE(read_text(a).empty());
  EXPECT_EQ(read_text(a), read_text(b));
  EXPECT_FALSE(read_regression_dataset(a).empty());
}

TEST_F(Cli, ScorePrintsOneFixedPointLine) {
  const auto ck = file("m.capy");
  auto m = ScorerModel::fresh(1024);
  save_checkpoint(m, nullptr, ck);
  const auto r = run("score --checkpoint " + ck + " --instruction 'Sort: b a' --response 'a b'");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.5000\n");
}

TEST_F(Cli, ScoreStreamsJsonl) {
  const auto ck = file("m.capy");
  save_checkpoint(ScorerModel::fresh(1024), nullptr, ck);
  std::ofstream(file("in.jsonl")) << R"({"instruction":"a","response":"b"})" "\n"
                                  << R"({"instruction":"c","response":"d"})" "\n";
  const auto r = run("score --checkpoint " + ck + " --input " + file("in.jsonl"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);
}

TEST_F(Cli, TrainThenSelect) {
  const auto rows = file("rows.jsonl"), ck = file("m.capy");
  ASSERT_EQ(run("build-data --corpus " + data("toy_train.jsonl") + " --out " + rows).code, 0);
  ASSERT_EQ(run("train --data " + rows + " --out " + ck + " --feature-dim 65536 --steps 20 --batch-size 64").code, 0);
  EXPECT_TRUE(fs::exists(ck));
  EXPECT_TRUE(fs::exists(ck + ".json"));
  std::ofstream(file("cands.jsonl")) << R"({"text":"apple banana"})" "\n" << R"({"text":"banana apple"})" "\n";
  const auto r = run("select --checkpoint " + ck + " --instruction 'Sort: banana apple' --candidates " +
                     file("cands.jsonl"));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["scores"].size(), 2u);
  EXPECT_EQ(j["method"], "cappy");
}

TEST_F(Cli, SelectWithEmptyCandidatesExitsTwo) {
  std::ofstream(file("empty.jsonl")) << "";
  EXPECT_EQ(run("select --method random --instruction q --candidates " + file("empty.jsonl")).code, 2);
}

TEST_F(Cli, InspectReportsCounts) {
  const auto rows = file("rows.jsonl");
  ASSERT_EQ(run("build-data --corpus " + data("toy_train.jsonl") + " --out " + rows).code, 0);
  const auto r = run("inspect --data " + rows);
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["total"].get<std::size_t>(), read_regression_dataset(rows).size());
  EXPECT_GT(j["per_provenance"]["augmented"].get<int>(), 0);
}

TEST_F(Cli, InspectMissingFileExitsTwo) { EXPECT_EQ(run("inspect --data " + file("nope.jsonl")).code, 2); }

}  // namespace
}  // namespace capy
