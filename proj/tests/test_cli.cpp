#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcaudit/cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testing_support::example;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
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
    dir_ = fs::temp_directory_path() / ("mcaudit-cli-" + std::to_string(::getpid()) + "-" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result cli(std::vector<std::string> args, const std::string& input = "") {
    args.insert(args.begin(), "mcaudit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::istringstream in(input);
    std::ostringstream out, err;
    const int code = mcaudit::cli::run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
    return {code, out.str(), err.str()};
  }

  fs::path out(const std::string& sub) const { return dir_ / sub; }

  fs::path write_doc(const std::string& name, const std::string& text) const {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

int binary(const std::string& args) {
  const std::string cmd = std::string(MCAUDIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(Cli, ValidateDemo) {
  const auto r = cli({"--out", out("v").string(), "validate", example("project-npv.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ok: project-npv"), std::string::npos);
  EXPECT_FALSE(fs::exists(out("v")));
}

TEST_F(Cli, ValidateCycle) {
  const auto r = cli({"validate", example("cycle.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("A1->A2->A1"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingFileIsUsageError) {
  EXPECT_EQ(cli({"validate", (dir_ / "nope.json").string()}).code, 3);
  EXPECT_EQ(cli({"run", (dir_ / "nope.json").string()}).code, 3);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 3);
  EXPECT_EQ(cli({"frobnicate"}).code, 3);
  EXPECT_EQ(cli({"run"}).code, 3);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"--trials", "0", "--out", out("x").string(), "run", example("linear-tornado.json")}).code, 3);
  EXPECT_EQ(cli({"--trials", "-4", "--out", out("x").string(), "run", example("linear-tornado.json")}).code, 3);
  EXPECT_EQ(cli({"--out", out("x").string(), "tornado", example("linear-tornado.json"), "--low", "0.9", "--high", "0.1"})
                .code,
            3);
  EXPECT_EQ(cli({"--out", out("x").string(), "scenario", example("linear-tornado.json"), "--forecast", "f", "--min",
                 "2", "--max", "1"})
                .code,
            3);
  EXPECT_EQ(cli({"--out", out("x").string(), "scenario", example("linear-tornado.json"), "--forecast", "nope"}).code, 3);
}

TEST_F(Cli, SchemaErrors) {
  const auto bad_json = write_doc("a.json", "{ not json");
  EXPECT_EQ(cli({"validate", bad_json.string()}).code, 3);
  const auto bad_dist = write_doc("b.json", R"({"name": "b", "cells": [{"address": "A1", "formula": "1"}],
    "assumptions": [{"cell": "A1", "distribution": {"type": "Weibull", "k": 2}}], "forecasts": []})");
  const auto r = cli({"validate", bad_dist.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(r.err.empty());
  const auto no_cells = write_doc("c.json", R"({"name": "c"})");
  EXPECT_EQ(cli({"validate", no_cells.string()}).code, 3);
}

TEST_F(Cli, RunIsByteReproducible) {
  for (const char* sub : {"a", "b"}) {
    const auto r = cli({"--out", out(sub).string(), "run", example("project-npv.json")});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"report.json", "trials.csv", "errors.csv", "histogram-NPV.csv"}) {
    ASSERT_TRUE(fs::exists(out("a") / f)) << f;
    EXPECT_EQ(slurp(out("a") / f), slurp(out("b") / f)) << f;
  }
  const auto report = mcaudit::Json::parse(slurp(out("a") / "report.json"));
  EXPECT_EQ(report["run"]["seed"], 42);
  EXPECT_EQ(report["run"]["completed"], 5000);
}

TEST_F(Cli, SeedChangesOutput) {
  cli({"--out", out("a").string(), "run", example("linear-tornado.json")});
  cli({"--seed", "8", "--out", out("b").string(), "run", example("linear-tornado.json")});
  EXPECT_NE(slurp(out("a") / "trials.csv"), slurp(out("b") / "trials.csv"));
}

TEST_F(Cli, RunHaltsWithDossier) {
  const auto r = cli({"--out", out("s").string(), "run", example("sqrt-trap.json")});
  EXPECT_EQ(r.code, 1);
  ASSERT_TRUE(fs::exists(out("s") / "dossier.json"));
  const auto d = mcaudit::Json::parse(slurp(out("s") / "dossier.json"));
  EXPECT_EQ(d["kind"], "DomainError");
  EXPECT_NE(r.out.find("DomainError"), std::string::npos);

  const auto c = cli({"--out", out("c").string(), "run", example("sqrt-trap.json"), "--continue-on-error"});
  EXPECT_EQ(c.code, 0) << c.err;
  EXPECT_FALSE(fs::exists(out("c") / "dossier.json"));
  EXPECT_GT(slurp(out("c") / "errors.csv").size(), 100u);
}

TEST_F(Cli, TornadoWritesBars) {
  const auto r = cli({"--out", out("t").string(), "tornado", example("linear-tornado.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = mcaudit::Json::parse(slurp(out("t") / "tornado.json"));
  ASSERT_TRUE(j.is_array());
  EXPECT_NEAR(j[0]["bars"][0]["swing"].get<double>(), 2.4, 1e-9);
  EXPECT_TRUE(fs::exists(out("t") / "tornado-f.csv"));
}

TEST_F(Cli, ScenarioFullRangeAndApply) {
  const auto full = cli({"--trials", "300", "--out", out("s").string(), "scenario", example("linear-tornado.json"),
                         "--forecast", "f"});
  ASSERT_EQ(full.code, 0) << full.err;
  std::istringstream rows(slurp(out("s") / "scenario.csv"));
  std::string line;
  std::size_t n = 0;
  std::getline(rows, line);
  while (std::getline(rows, line)) ++n;
  EXPECT_EQ(n, 300u);

  // the baked document reproduces trial 7 exactly as a one-trial run
  const auto ap = cli({"--trials", "300", "--out", out("s").string(), "scenario", example("linear-tornado.json"),
                       "--forecast", "f", "--apply", "7"});
  ASSERT_EQ(ap.code, 0) << ap.err;
  const auto baked = out("s") / "linear-tornado.scenario7.json";
  ASSERT_TRUE(fs::exists(baked));
  const auto one = cli({"--trials", "1", "--out", out("one").string(), "run", baked.string()});
  ASSERT_EQ(one.code, 0) << one.err;
  std::istringstream s(slurp(out("s") / "scenario.csv")), t(slurp(out("one") / "trials.csv"));
  std::string trial7, replayed;
  while (std::getline(s, line))
    if (line.rfind("7,", 0) == 0) trial7 = line.substr(line.rfind(',') + 1);
  std::getline(t, line);
  std::getline(t, line);
  replayed = line.substr(line.rfind(',') + 1);
  ASSERT_FALSE(trial7.empty());
  EXPECT_EQ(trial7, replayed);

  EXPECT_EQ(cli({"--trials", "300", "--out", out("s").string(), "scenario", example("linear-tornado.json"), "--forecast",
                 "f", "--max", "-100", "--apply", "7"})
                .code,
            3);
}

TEST_F(Cli, AuditExitCodes) {
  const auto clean = cli({"--out", out("a").string(), "audit", example("project-npv.json")});
  EXPECT_EQ(clean.code, 0) << clean.out;
  const auto hard = cli({"--out", out("b").string(), "audit", example("project-npv-hardcode.json")});
  EXPECT_EQ(hard.code, 2);
  EXPECT_NE(hard.out.find("[error] Disconnected"), std::string::npos) << hard.out;
  const auto j = mcaudit::Json::parse(slurp(out("b") / "audit.json"));
  EXPECT_FALSE(j["findings"].empty());
  const auto masked = cli({"--out", out("c").string(), "audit", example("project-npv-masking.json")});
  EXPECT_EQ(masked.code, 0);
  EXPECT_NE(masked.out.find("CorrelationMasking"), std::string::npos);
}

TEST_F(Cli, AuditWithHistory) {
  const auto h = write_doc("h.csv", "a,b,f\n0.5,0.5,0.5\n1,0,3\n");
  const auto r = cli({"--out", out("a").string(), "audit", example("linear-tornado.json"), "--history", h.string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_TRUE(fs::exists(out("a") / "backcast.csv"));
  EXPECT_EQ(cli({"audit", example("linear-tornado.json"), "--history", (dir_ / "missing.csv").string()}).code, 3);
  const auto bad = write_doc("bad.csv", "zzz\n1\n");
  EXPECT_EQ(cli({"audit", example("linear-tornado.json"), "--history", bad.string()}).code, 3);
}

TEST_F(Cli, StepSession) {
  const auto r = cli({"step", example("linear-tornado.json")}, "step\ntrace f\nrun 100\nbogus\nquit\n");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("trial 0"), std::string::npos);
  EXPECT_NE(r.out.find("formula: =3*A1-2*A2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("ran trials 1..100: 100 completed"), std::string::npos);
  EXPECT_EQ(cli({"step", example("linear-tornado.json")}, "step\n").code, 0);  // EOF ends the session
}

TEST(Binary, ExitCodes) {
  EXPECT_EQ(binary("validate " + example("project-npv.json")), 0);
  EXPECT_EQ(binary("validate " + example("cycle.json")), 1);
  EXPECT_EQ(binary("validate /nonexistent/model.json"), 3);
  EXPECT_EQ(binary(""), 3);
  const auto dir = fs::temp_directory_path() / ("mcaudit-bin-" + std::to_string(::getpid()));
  EXPECT_EQ(binary("--out " + dir.string() + " audit " + example("project-npv-hardcode.json")), 2);
  EXPECT_EQ(binary("--out " + dir.string() + " run " + example("sqrt-trap.json")), 1);
  fs::remove_all(dir);
}
