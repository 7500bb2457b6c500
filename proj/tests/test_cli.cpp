/* Copyright 2026 The hyplan Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Drives the hyplan executable end to end.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "hyplan/json_io.hpp"
#include "hyplan/oracle.hpp"
#include "hyplan/plan.hpp"
#include "test_util.hpp"

namespace hyplan {
namespace {

namespace fs = std::filesystem;
using testing::fixture;

int run(const std::string& args) {
  const std::string cmd = std::string(HYPLAN_CLI) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { dir = testing::scratch_dir("cli"); }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string toy_inputs() const {
    return "--cluster " + fixture("toy_cluster.json") + " --model " +
           fixture("toy_model.json") + " --training " +
           fixture("toy_training.json");
  }
  fs::path dir;
};

TEST_F(CliTest, SynthModel) {
  ASSERT_EQ(run("synth-profile --model --layers 4 --hidden 64 --seq 128 -o " +
                path("m.json")),
            0);
  auto m = load_model_profile(path("m.json"));
  EXPECT_EQ(m.n_layers, 4);
  EXPECT_EQ(m.layers[3], synth_transformer_layer(64));
}

TEST_F(CliTest, SynthMissingHiddenIsUsageError) {
  EXPECT_EQ(run("synth-profile --model --layers 4 --seq 128 -o " + path("m.json") +
                " 2>/dev/null"),
            2);
}

TEST_F(CliTest, SynthUnwritableOutputIsIoError) {
  EXPECT_EQ(run("synth-profile --model --layers 4 --hidden 64 --seq 128 -o " +
                path("missing/dir/m.json") + " 2>/dev/null"),
            3);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run("search --bogus 2>/dev/null"), 2);
  EXPECT_EQ(run("2>/dev/null"), 2);
  EXPECT_EQ(run("--help >/dev/null"), 0);
}

TEST_F(CliTest, SearchReproducesGoldenPlan) {
  const std::string golden = read_text_file(fixture("toy_golden_plan.json"));
  for (int jobs : {1, 2, 4}) {
    const std::string out = path("plan" + std::to_string(jobs) + ".json");
    ASSERT_EQ(run("search " + toy_inputs() + " --jobs " + std::to_string(jobs) +
                  " -o " + out + " > " + path("summary.txt")),
              0);
    EXPECT_EQ(read_text_file(out), golden) << "jobs=" << jobs;
  }
  const std::string summary = read_text_file(path("summary.txt"));
  auto plan = load_plan(fixture("toy_golden_plan.json"));
  EXPECT_EQ(summary, "time=" + format_double(plan.predicted_iteration_time) +
                         " pp=" + std::to_string(plan.pp) + " microbatch=" +
                         std::to_string(plan.microbatch) + "\n");
}

TEST_F(CliTest, GoldenPlanIsTheOracleOptimum) {
  auto cluster = load_cluster_profile(fixture("toy_cluster.json"));
  auto model = load_model_profile(fixture("toy_model.json"));
  auto training = load_training_config(fixture("toy_training.json"));
  auto golden = load_plan(fixture("toy_golden_plan.json"));
  auto oracle = brute_force_optimize(model, cluster, training, {});
  EXPECT_LE(std::abs(golden.predicted_iteration_time -
                     oracle.predicted_iteration_time),
            1e-9 * oracle.predicted_iteration_time);
  EXPECT_TRUE(validate_plan(golden, model, cluster, training).empty());
}

TEST_F(CliTest, SearchInfeasibleExits4) {
  const std::string err = path("err.txt");
  EXPECT_EQ(run("search --cluster " + fixture("infeasible_cluster.json") +
                " --model " + fixture("toy_model.json") + " --training " +
                fixture("toy_training.json") + " -o " + path("p.json") +
                " 2> " + err),
            4);
  EXPECT_NE(read_text_file(err).find("tightest stage is stage 0"),
            std::string::npos);
}

TEST_F(CliTest, SearchMissingInputIsIoError) {
  EXPECT_EQ(run("search --cluster " + path("nope.json") + " --model " +
                fixture("toy_model.json") + " 2>/dev/null"),
            3);
}

TEST_F(CliTest, SearchStrictRejectsUnknownKeys) {
  std::string text = read_text_file(fixture("toy_model.json"));
  text.insert(text.find("\"hidden_size\""), "\"extra\": 1, ");
  write_text_file(path("m.json"), text);
  const std::string base = "search --cluster " + fixture("toy_cluster.json") +
                           " --model " + path("m.json") + " --training " +
                           fixture("toy_training.json") + " -o " +
                           path("p.json");
  EXPECT_EQ(run(base + " 2>/dev/null"), 2);
  EXPECT_EQ(run(base + " --lenient >/dev/null"), 0);
}

TEST_F(CliTest, TrainingFallsBackToModelFile) {
  ASSERT_EQ(run("synth-profile --model --layers 2 --hidden 512 --seq 256 "
                "--global-batch 8 -o " + path("mt.json")),
            0);
  ASSERT_EQ(run("search --cluster " + fixture("toy_cluster.json") + " --model " +
                path("mt.json") + " -o " + path("p.json") + " >/dev/null"),
            0);
  EXPECT_EQ(read_text_file(path("p.json")),
            read_text_file(fixture("toy_golden_plan.json")));
}

TEST_F(CliTest, SearchThenValidateSucceeds) {
  ASSERT_EQ(run("search " + toy_inputs() + " --transitions off -o " +
                path("p.json") + " >/dev/null"),
            0);
  EXPECT_EQ(run("validate " + toy_inputs() + " --transitions off --plan " +
                path("p.json") + " >/dev/null"),
            0);
}

TEST_F(CliTest, ValidateCorruptedPlanExits5) {
  auto plan = load_plan(fixture("toy_golden_plan.json"));
  plan.pp = 2;
  plan.stage_ranges = {{0, 2}, {1, 2}};
  save_plan(path("bad.json"), plan);
  const std::string err = path("err.txt");
  EXPECT_EQ(run("validate " + toy_inputs() + " --plan " + path("bad.json") +
                " 2> " + err),
            5);
  EXPECT_NE(read_text_file(err).find("stage_ranges not a partition"),
            std::string::npos);
}

TEST_F(CliTest, SimulateGoldenPlan) {
  ASSERT_EQ(run("simulate " + toy_inputs() + " --plan " +
                fixture("toy_golden_plan.json") + " -o " + path("sim.json") +
                " --trace " + path("trace.jsonl")),
            0);
  auto sim = read_json_file(path("sim.json"));
  auto plan = load_plan(fixture("toy_golden_plan.json"));
  const double makespan = sim["makespan"].get<double>();
  EXPECT_LE(std::abs(makespan - plan.predicted_iteration_time),
            0.05 * plan.predicted_iteration_time);
  EXPECT_EQ(sim["analytic_time"].get<double>(), plan.predicted_iteration_time);
  const std::string trace = read_text_file(path("trace.jsonl"));
  EXPECT_EQ(static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n')),
            sim["n_events"].get<std::size_t>());
}

TEST_F(CliTest, ReportRowCount) {
  ASSERT_EQ(run("report " + toy_inputs() + " --plan " +
                fixture("toy_golden_plan.json") + " -o " + path("r.json")),
            0);
  const std::string csv = read_text_file(path("r.csv"));
  auto plan = load_plan(fixture("toy_golden_plan.json"));
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines - 1, 2 + plan.pp + 1);  // header excluded
  auto j = read_json_file(path("r.json"));
  EXPECT_EQ(j["layers"].size(), 2u);
}

TEST_F(CliTest, OutputsAreByteIdenticalAcrossRuns) {
  for (int k = 0; k < 2; ++k) {
    const std::string s = std::to_string(k);
    ASSERT_EQ(run("simulate " + toy_inputs() + " --plan " +
                  fixture("toy_golden_plan.json") + " -o " + path("s" + s) +
                  " --trace " + path("t" + s)),
              0);
    ASSERT_EQ(run("report " + toy_inputs() + " --plan " +
                  fixture("toy_golden_plan.json") + " -o " + path("r" + s + ".json")),
              0);
  }
  EXPECT_EQ(read_text_file(path("s0")), read_text_file(path("s1")));
  EXPECT_EQ(read_text_file(path("t0")), read_text_file(path("t1")));
  EXPECT_EQ(read_text_file(path("r0.json")), read_text_file(path("r1.json")));
  EXPECT_EQ(read_text_file(path("r0.csv")), read_text_file(path("r1.csv")));
}

}  // namespace
}  // namespace hyplan
