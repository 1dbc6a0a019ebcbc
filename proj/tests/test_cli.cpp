// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cam/cli/app.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cam;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> data_lines(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(line);
  return rows;
}

// Column `col` of every data row (after the schema and header lines).
std::vector<std::string> column(const fs::path& csv, int col) {
  std::vector<std::string> out;
  const auto lines = data_lines(csv);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::stringstream ss(lines[i]);
    std::string cell;
    for (int c = 0; c <= col; ++c) std::getline(ss, cell, ',');
    out.push_back(cell);
  }
  return out;
}

bool looks_like_svg(const fs::path& p) {
  const std::string s = slurp(p);
  if (s.size() < 100 || s.rfind("<?xml", 0) != 0) return false;
  if (s.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") == std::string::npos) return false;
  if (s.find("</svg>") == std::string::npos) return false;
  // Every opened element is closed or self-closed.
  int depth = 0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] != '<' || s[i + 1] == '?') continue;
    const std::size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    if (s[i + 1] == '/') {
      --depth;
    } else if (s[end - 1] != '/') {
      ++depth;
    }
    if (depth < 0) return false;
  }
  return depth == 0;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cam_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = (dir_ / "run.json").string();
    std::ofstream(config_) << R"({
      "preset": "tiny", "dim": 4,
      "data": {"num_sequences": 64, "length": 40},
      "train": {"batch_size": 8},
      "generation": {"target_length": 32, "num_steps_denoise": 4},
      "eval": {"num_traces": 48, "reference_sequences": 128,
               "fed": {"window": 16, "reference_windows": 256, "background": 48, "draws": 2}}
    })";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }
  std::vector<std::string> with_config(std::vector<std::string> args) const {
    args.push_back("--config");
    args.push_back(config_);
    return args;
  }
  void train(const std::string& name, const std::string& objective, int steps) {
    const auto r = run(with_config({"train", "--objective", objective, "--steps", std::to_string(steps), "--out",
                                    out(name), "--seed", "5"}));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
  std::string config_;
};

TEST_F(Cli, GenDataWritesSealedFile) {
  const auto r = run({"gen-data", "--out", out("a"), "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string bytes = slurp(out("a") + "/data.came");
  EXPECT_EQ(bytes.substr(0, 4), "CAME");
  const auto ds = data::read_embeddings(out("a") + "/data.came");  // verifies the CRC
  EXPECT_EQ(ds.size(), 2048u);
  EXPECT_EQ(ds.dim, 8);
  EXPECT_TRUE(fs::exists(out("a") + "/gen-data.config.json"));
  EXPECT_TRUE(fs::exists(out("a") + "/process.json"));
}

TEST_F(Cli, GenDataSameSeedSameBytes) {
  ASSERT_EQ(run(with_config({"gen-data", "--out", out("a"), "--seed", "9"})).code, 0);
  ASSERT_EQ(run(with_config({"gen-data", "--out", out("b"), "--seed", "9"})).code, 0);
  ASSERT_EQ(run(with_config({"gen-data", "--out", out("c"), "--seed", "10"})).code, 0);
  EXPECT_EQ(slurp(out("a") + "/data.came"), slurp(out("b") + "/data.came"));
  EXPECT_NE(slurp(out("a") + "/data.came"), slurp(out("c") + "/data.came"));
}

TEST_F(Cli, ResolvedConfigReproducesRun) {
  ASSERT_EQ(run(with_config({"gen-data", "--out", out("a"), "--seed", "9"})).code, 0);
  const std::string dumped = slurp(out("a") + "/gen-data.config.json");
  EXPECT_NE(dumped.find("\"logit_normal\""), std::string::npos);
  ASSERT_EQ(run({"gen-data", "--config", out("a") + "/gen-data.config.json", "--out", out("b")}).code, 0);
  EXPECT_EQ(slurp(out("a") + "/data.came"), slurp(out("b") + "/data.came"));
}

TEST_F(Cli, GenDataZeroDimIsConfigError) {
  const auto r = run({"gen-data", "--out", out("a"), "--dim", "0"});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("dim"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyRejected) {
  const std::string path = out("bad.json");
  std::ofstream(path) << R"({"train": {"batch_size": 8, "learning_rat": 0.1}})";
  const auto r = run({"gen-data", "--config", path, "--out", out("a")});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("train.learning_rat"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingConfigFileIsIoError) {
  EXPECT_EQ(run({"gen-data", "--config", out("nope.json"), "--out", out("a")}).code, cli::kIoError);
}

TEST_F(Cli, FlagsOverrideConfig) {
  ASSERT_EQ(run(with_config({"gen-data", "--out", out("a"), "--dim", "3", "--seed", "4"})).code, 0);
  std::ifstream in(out("a") + "/gen-data.config.json");
  nlohmann::json j;
  in >> j;
  EXPECT_EQ(j["dim"], 3);
  EXPECT_EQ(j["seed"], 4);
  EXPECT_EQ(j["preset"], "tiny");
  EXPECT_EQ(data::read_embeddings(out("a") + "/data.came").dim, 3);
}

TEST_F(Cli, TrainEmitsOneRowPerStep) {
  const auto r = run({"train", "--objective", "cam", "--steps", "100", "--preset", "tiny", "--out", out("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = data_lines(out("t") + "/metrics.csv");
  ASSERT_EQ(lines.size(), 102u);
  EXPECT_EQ(lines[0], train::MetricsCsv::kSchema);
  EXPECT_EQ(lines[1], "step,wall_ms,loss,grad_norm");
  EXPECT_EQ(column(out("t") + "/metrics.csv", 0).back(), "100");
  EXPECT_TRUE(fs::exists(out("t") + "/checkpoint.camc"));
  EXPECT_TRUE(looks_like_svg(out("t") + "/loss.svg"));
  EXPECT_NE(r.out.find("checkpoint " + out("t") + "/checkpoint.camc"), std::string::npos);
}

TEST_F(Cli, ResumeMatchesUninterrupted) {
  train("full", "cam", 10);
  train("part", "cam", 4);
  const auto r = run(with_config({"train", "--objective", "cam", "--steps", "10", "--out", out("part"), "--seed", "5",
                                  "--resume"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resuming from step 4"), std::string::npos);
  EXPECT_EQ(column(out("full") + "/metrics.csv", 2), column(out("part") + "/metrics.csv", 2));
  EXPECT_EQ(slurp(out("full") + "/checkpoint.camc"), slurp(out("part") + "/checkpoint.camc"));
}

TEST_F(Cli, GivtModeCountsBuild) {
  for (const char* modes : {"8", "32"}) {
    const std::string o = out(std::string("givt") + modes);
    const auto r = run(with_config({"train", "--objective", "givt", "--modes", modes, "--steps", "2", "--out", o}));
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(o + "/train.config.json");
    nlohmann::json j;
    in >> j;
    EXPECT_EQ(j["resolved"]["model"]["gmm"]["num_modes"], std::stoi(modes));
    EXPECT_EQ(j["resolved"]["model"]["head"], "gmm");
  }
}

TEST_F(Cli, NonFiniteLossHasItsOwnExitCode) {
  data::Dataset ds;
  ds.dim = 4;
  for (int i = 0; i < 8; ++i) ds.sequences.push_back(Matf::Constant(40, 4, std::numeric_limits<float>::quiet_NaN()));
  data::write_embeddings(ds, out("nan.came"));
  const auto r = run(with_config({"train", "--data", out("nan.came"), "--steps", "3", "--out", out("t")}));
  EXPECT_EQ(r.code, cli::kNumericError) << r.err;
}

TEST_F(Cli, GenerateIsDeterministic) {
  train("m", "cam", 5);
  for (const char* o : {"g1", "g2"}) {
    const auto r = run(with_config({"generate", "--checkpoint", out("m") + "/checkpoint.camc", "--out", out(o),
                                    "--seed", "3", "--num-traces", "6"}));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(out("g1") + "/traces.came"), slurp(out("g2") + "/traces.came"));
  EXPECT_EQ(slurp(out("g1") + "/traces.came.fed"), slurp(out("g2") + "/traces.came.fed"));
  const auto ds = data::read_embeddings(out("g1") + "/traces.came");
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.sequences[0].rows(), 32);
}

TEST_F(Cli, KInfChangesFedBackStreamOnly) {
  train("m", "cam", 5);
  for (const auto& [o, k] : {std::pair{"k0", "0"}, std::pair{"k2", "0.02"}}) {
    const auto r = run(with_config({"generate", "--checkpoint", out("m") + "/checkpoint.camc", "--out", out(o),
                                    "--seed", "3", "--num-traces", "4", "--k-inf", k}));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto clean0 = data::read_embeddings(out("k0") + "/traces.came");
  const auto clean2 = data::read_embeddings(out("k2") + "/traces.came");
  const auto fed0 = data::read_embeddings(out("k0") + "/traces.came.fed");
  const auto fed2 = data::read_embeddings(out("k2") + "/traces.came.fed");
  EXPECT_NE(slurp(out("k0") + "/traces.came.fed"), slurp(out("k2") + "/traces.came.fed"));
  for (std::size_t i = 0; i < clean0.size(); ++i) {
    // Same per-position draws: the first element precedes any feed-back.
    EXPECT_EQ(clean0.sequences[i].row(0), clean2.sequences[i].row(0));
    EXPECT_EQ(fed0.sequences[i], clean0.sequences[i]);
    EXPECT_GT((fed2.sequences[i] - clean2.sequences[i]).norm(), 0.0f);
  }
  std::ifstream a(out("k0") + "/traces.came.json");
  std::ifstream b(out("k2") + "/traces.came.json");
  nlohmann::json ja;
  nlohmann::json jb;
  a >> ja;
  b >> jb;
  EXPECT_EQ(ja["seeds"], jb["seeds"]);
  EXPECT_EQ(ja["schema"], "cam-trace-meta/1");
}

TEST_F(Cli, DenoisingStepRange) {
  train("m", "mar_rf", 3);
  for (const char* n : {"10", "100"}) {
    const auto r = run(with_config({"generate", "--checkpoint", out("m") + "/checkpoint.camc", "--out",
                                    out(std::string("n") + n), "--num-steps", n, "--num-traces", "2"}));
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(out(std::string("n") + n) + "/traces.came.json");
    nlohmann::json j;
    in >> j;
    EXPECT_EQ(j["generation"]["num_steps_denoise"], std::stoi(n));
  }
}

TEST_F(Cli, CheckpointObjectiveMismatch) {
  train("m", "cam", 2);
  const auto r = run(with_config({"generate", "--checkpoint", out("m") + "/checkpoint.camc", "--objective", "givt",
                                  "--out", out("g")}));
  EXPECT_EQ(r.code, cli::kConfigError);
}

TEST_F(Cli, EvalCsvChartsAndOracleNotice) {
  train("m", "cam", 5);
  ASSERT_EQ(run(with_config({"generate", "--out", out("m"), "--seed", "5"})).code, 0);
  const auto r = run(with_config({"eval", "--out", out("m")}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("notice: no oracle spec"), std::string::npos);
  EXPECT_FALSE(fs::exists(out("m") + "/conditional.csv"));
  const auto lines = data_lines(out("m") + "/eval.csv");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "# schema: cam-eval/1");
  EXPECT_EQ(lines[1], "model,seed,FED,FED_acc,MMD,tau");
  EXPECT_EQ(lines[2].rfind("cam,5,", 0), 0u) << lines[2];
  EXPECT_TRUE(looks_like_svg(out("m") + "/accumulation.svg"));
  EXPECT_TRUE(looks_like_svg(out("m") + "/fed.svg"));
  EXPECT_TRUE(fs::exists(out("m") + "/eval.config.json"));

  ASSERT_EQ(run(with_config({"gen-data", "--out", out("m"), "--seed", "5"})).code, 0);
  const auto c = run(with_config({"eval", "--out", out("m"), "--oracle", out("m") + "/process.json"}));
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(data_lines(out("m") + "/conditional.csv")[1], "model,seed,mean_err,cov_err,probes");
}

TEST_F(Cli, EvalTooFewTracesIsConfigError) {
  train("m", "cam", 2);
  ASSERT_EQ(run(with_config({"generate", "--out", out("m"), "--num-traces", "8"})).code, 0);
  const auto r = run(with_config({"eval", "--out", out("m")}));
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("generate more traces"), std::string::npos) << r.err;
}

TEST_F(Cli, SweepDefaultGrid) {
  train("m", "cam", 5);
  const auto r = run(with_config({"sweep-kinf", "--out", out("m")}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto k = column(out("m") + "/sweep.csv", 0);
  EXPECT_EQ(k, (std::vector<std::string>{"0", "0.005", "0.01", "0.02", "0.03", "0.05"}));
  EXPECT_EQ(data_lines(out("m") + "/sweep.csv")[1], "k_inf,FED,FED_acc");
  std::ifstream in(out("m") + "/sweep.json");
  nlohmann::json j;
  in >> j;
  const double best = j["argmin_k_inf_fed_acc"];
  const auto acc = column(out("m") + "/sweep.csv", 2);
  double lowest = 1e300;
  double at = -1;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (std::stod(acc[i]) < lowest) {
      lowest = std::stod(acc[i]);
      at = std::stod(k[i]);
    }
  }
  EXPECT_EQ(best, at);
  EXPECT_NE(r.out.find("argmin k_inf for FED_acc"), std::string::npos);
  EXPECT_TRUE(looks_like_svg(out("m") + "/sweep.svg"));
}

TEST_F(Cli, SweepOfOneEqualsEval) {
  train("m", "cam", 5);
  ASSERT_EQ(run(with_config({"sweep-kinf", "--out", out("m"), "--grid", "0.02"})).code, 0);
  ASSERT_EQ(run(with_config({"generate", "--out", out("m"), "--k-inf", "0.02"})).code, 0);
  ASSERT_EQ(run(with_config({"eval", "--out", out("m")})).code, 0);
  EXPECT_EQ(column(out("m") + "/sweep.csv", 1), column(out("m") + "/eval.csv", 2));
  EXPECT_EQ(column(out("m") + "/sweep.csv", 2), column(out("m") + "/eval.csv", 3));
}

TEST_F(Cli, CompareSmokeKeepsOrderAndSeeds) {
  const std::string path = out("cmp.json");
  std::ofstream(path) << R"({
    "preset": "tiny", "dim": 4, "seed": 11,
    "data": {"num_sequences": 64, "length": 40},
    "train": {"batch_size": 8, "total_steps": 3},
    "generation": {"target_length": 32, "num_steps_denoise": 3},
    "eval": {"num_traces": 48, "reference_sequences": 128,
             "fed": {"window": 16, "reference_windows": 256, "background": 48, "draws": 1}},
    "compare": {"objectives": ["givt_noise", "cam", "mar_linear"], "seeds": 1}
  })";
  const auto r = run({"compare", "--config", path, "--out", out("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = data_lines(out("c") + "/compare.md");
  ASSERT_EQ(table.size(), 5u);
  EXPECT_EQ(table[2].rfind("| givt_noise |", 0), 0u);
  EXPECT_EQ(table[3].rfind("| cam |", 0), 0u);
  EXPECT_EQ(table[4].rfind("| mar_linear |", 0), 0u);
  EXPECT_EQ(column(out("c") + "/compare_cells.csv", 1), (std::vector<std::string>{"11", "11", "11"}));
  EXPECT_TRUE(looks_like_svg(out("c") + "/compare.svg"));
}

TEST(Svg, EscapesLabels) {
  const std::string s = cli::svg::bar_chart("a<b", "y", {{"x&y", 1.0, 0.1}});
  EXPECT_NE(s.find("a&lt;b"), std::string::npos);
  EXPECT_NE(s.find("x&amp;y"), std::string::npos);
}

}  // namespace
