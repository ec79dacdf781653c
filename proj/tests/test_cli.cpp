// End-to-end checks of the `lno` executable. Each test works in its own
// scratch directory; the beam case is used because its data is analytic and
// quick to generate.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"
#include "lno/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("lno-cli-") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "LNO_OUTPUT_ROOT='" + (dir_ / "root").string() + "' '" LNO_CLI_PATH "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    return r;
  }

  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }

  // Beam datasets under `data`.
  void generate_beam() const {
    const auto r = run("--quiet generate --case beam --out " + p("data"));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

TEST_F(Cli, UnknownCaseIsUsageError) {
  const auto r = run("generate --case nonesuch");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("duffing"), std::string::npos) << "valid cases should be listed: " << r.err;
}

TEST_F(Cli, UnknownScenarioIsUsageError) {
  const auto r = run("generate --case duffing --scenario c7");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("c0"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run("").code, 2); }

TEST_F(Cli, GenerateWritesSplitsAndIsRepeatable) {
  generate_beam();
  for (const char* f : {"train.lnod", "vali.lnod", "test.lnod", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "data" / f)) << f;
  }
  const auto m = json::parse(slurp(dir_ / "data" / "manifest.json"));
  EXPECT_EQ(m["command"], "generate");
  EXPECT_EQ(m["config"]["case"], "beam");
  EXPECT_EQ(m["artifacts"].size(), 3u);

  const auto r = run("--quiet generate --case beam --out " + p("again"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"train.lnod", "vali.lnod", "test.lnod"}) {
    EXPECT_EQ(slurp(dir_ / "data" / f), slurp(dir_ / "again" / f)) << f;
  }
}

TEST_F(Cli, RefusesNonEmptyOutputWithoutOverwrite) {
  generate_beam();
  const auto before = slurp(dir_ / "data" / "train.lnod");
  auto r = run("--quiet generate --case beam --out " + p("data"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--overwrite"), std::string::npos) << r.err;
  EXPECT_EQ(slurp(dir_ / "data" / "train.lnod"), before);
  r = run("--quiet generate --case beam --overwrite --out " + p("data"));
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, TrainWithoutDatasetGivesActionableError) {
  const auto r = run("train --case beam --model lno --data " + p("nowhere") + " --out " + p("run"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("lno generate --case beam"), std::string::npos) << r.err;
}

TEST_F(Cli, ConfigSchemaViolationNamesTheField) {
  generate_beam();
  std::ofstream(dir_ / "bad.json") << R"({"train": {"epochz": 3}})";
  auto r = run("train --case beam --model lno --config " + p("bad.json") + " --data " + p("data") + " --out " +
               p("run"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("epochz"), std::string::npos) << r.err;

  std::ofstream(dir_ / "bad2.json") << R"({"model": {"width": "wide"}})";
  r = run("train --case beam --model lno --config " + p("bad2.json") + " --data " + p("data") + " --out " +
          p("run2"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("width"), std::string::npos) << r.err;
}

TEST_F(Cli, DefaultTrainConfigMatchesTableRow) {
  // 1 epoch at lr 0 is enough to see the resolved configuration.
  const auto g = run("--quiet generate --case duffing --scenario c0 --out " + p("data"));
  ASSERT_EQ(g.code, 0) << g.err;
  const auto r = run("--quiet train --case duffing --scenario c0 --model lno --epochs 1 --lr 0 --data " + p("data") +
                     " --out " + p("run"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = json::parse(slurp(dir_ / "run" / "config.json"));
  EXPECT_EQ(c["model"]["width"], 4);
  EXPECT_EQ(c["model"]["modes"], json::array({16}));
  EXPECT_EQ(c["model"]["activation"], "sin");
  EXPECT_EQ(c["model"]["layers"], 1);
  EXPECT_EQ(c["train"]["batch_size"], 20);
  EXPECT_EQ(c["train"]["epochs"], 1);  // overridden
  EXPECT_EQ(c["train"]["learning_rate"], 0.0);
}

TEST_F(Cli, TrainAtZeroRateKeepsInitialParametersAndEvalMatchesReport) {
  generate_beam();
  const auto r = run("--quiet train --case beam --model lno --epochs 1 --lr 0 --seed 7 --data " + p("data") +
                     " --out " + p("run"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.lnoc", "report.json", "config.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }

  const auto trained = lno::OperatorModel::load(p("run/checkpoint.lnoc"));
  const auto fresh = lno::OperatorModel::build(trained.config(), 7);
  const auto a = trained.parameters(), b = fresh.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    if (a[k].tensor.is_complex()) {
      EXPECT_TRUE(std::ranges::equal(a[k].tensor.cvalues(), b[k].tensor.cvalues())) << a[k].name;
    } else {
      EXPECT_TRUE(std::ranges::equal(a[k].tensor.values(), b[k].tensor.values())) << a[k].name;
    }
  }

  const auto e = run("--quiet eval --checkpoint " + p("run/checkpoint.lnoc") + " --data " + p("data") + " --out " +
                     p("metrics.json"));
  ASSERT_EQ(e.code, 0) << e.err;
  const auto metrics = json::parse(slurp(dir_ / "metrics.json"));
  const auto report = json::parse(slurp(dir_ / "run" / "report.json"));
  EXPECT_EQ(metrics["per_sample"].size(), 130u);
  EXPECT_EQ(metrics["mean"].get<double>(), report["test_mean"].get<double>());
  EXPECT_EQ(metrics["per_sample"], report["test_rel_l2"]);

  const auto m = json::parse(slurp(dir_ / "run" / "manifest.json"));
  EXPECT_EQ(m["command"], "train");
  EXPECT_TRUE(m["datasets"]["train"].contains("fnv1a64"));
  EXPECT_TRUE(m.contains("argv"));
}

TEST_F(Cli, CorruptCheckpointIsRejected) {
  generate_beam();
  std::ofstream(dir_ / "junk.lnoc") << "not a checkpoint";
  const auto r = run("eval --checkpoint " + p("junk.lnoc") + " --data " + p("data") + " --out " + p("m.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "m.json"));
}

TEST_F(Cli, EvalRejectsMismatchedDataset) {
  generate_beam();
  auto r = run("--quiet train --case beam --model lno --epochs 1 --lr 0 --data " + p("data") + " --out " + p("run"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("--quiet generate --case diffusion --out " + p("diff"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("eval --checkpoint " + p("run/checkpoint.lnoc") + " --data " + p("diff") + " --out " + p("m.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("does not match"), std::string::npos) << r.err;
}

TEST_F(Cli, ReproduceEmitsTableJsonAndChart) {
  generate_beam();
  const auto r = run("--quiet reproduce --case beam --trials 1 --epochs 1 --data " + p("data") + " --out " + p("rep"));
  ASSERT_TRUE(r.code == 0 || r.code == 3) << r.code << ' ' << r.err;
  const std::string csv = slurp(dir_ / "rep" / "table.csv");
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "case,scenario,model,mean,std,trials,failed");
  std::size_t rows = 0;
  while (std::getline(lines, row)) {
    ++rows;
    std::vector<std::string> cols;
    std::istringstream cells(row);
    for (std::string cell; std::getline(cells, cell, ',');) cols.push_back(cell);
    ASSERT_EQ(cols.size(), 7u) << row;
    EXPECT_GE(std::stod(cols[3]), 0.0);
    EXPECT_EQ(cols[5], "1");
    EXPECT_EQ(cols[6], "0");
  }
  EXPECT_EQ(rows, 2u);
  const auto j = json::parse(slurp(dir_ / "rep" / "results.json"));
  EXPECT_EQ(j["models"].size(), 2u);
  EXPECT_EQ(j["ordering"]["held"].get<bool>(), r.code == 0);
  EXPECT_NE(slurp(dir_ / "rep" / "chart.svg").find("<svg"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "rep" / "manifest.json"));
}

}  // namespace
