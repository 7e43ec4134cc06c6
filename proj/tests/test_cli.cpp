#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = RTNM_CLI_PATH;

int run(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + kCli + "' " + args + " >out.txt 2>err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rtnm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void pipeline(const fs::path& dir) {
  std::ofstream(dir / "dgp.json") << R"({"n_units": 500, "seed": 11, "effect": 1.0})";
  ASSERT_EQ(run("simulate --config dgp.json --out panel.csv --covariates-out cov.csv --truth truth.json", dir), 0);
  ASSERT_EQ(run("match --input cov.csv --cohorts 1..4 --metric rank --seed 7 --out design.json --balance balance.csv", dir), 0);
  ASSERT_EQ(run("estimate --input panel.csv --design design.json --adjust linear --out att.json --csv est.csv", dir), 0);
  ASSERT_EQ(run("infer --att att.json --boot 300 --seed 5 --out sigma.json --csv est_se.csv", dir), 0);
  ASSERT_EQ(run("test --att att.json --sigma sigma.json --boot 300 --seed 6 --out tests.json --csv tests.csv", dir), 0);
  ASSERT_EQ(run("report --att att.json --sigma sigma.json --csv report.csv --text report.txt", dir), 0);
}

}  // namespace

TEST(Cli, ValidateReportsTreatmentReversal) {
  const fs::path dir = fresh_dir("reversal");
  std::ofstream(dir / "p.csv") << "unit,period,outcome,z,x\n"
                                  "a,0,,0,1\na,1,1,1,1\na,2,1,0,1\n"
                                  "b,0,,0,2\nb,1,2,0,2\nb,2,2,0,2\n";
  std::ofstream(dir / "s.json") << R"({"first_treated": null, "treatment": "z"})";
  EXPECT_EQ(run("validate --input p.csv --schema s.json", dir), 11);
  EXPECT_NE(slurp(dir / "err.txt").find("unit a"), std::string::npos) << slurp(dir / "err.txt");
}

TEST(Cli, MatchRefusesOutcomes) {
  const fs::path dir = fresh_dir("outcomes");
  ASSERT_EQ(run("simulate --n-units 200 --seed 3 --out panel.csv", dir), 0);
  EXPECT_EQ(run("match --input panel.csv --out design.json", dir), 2);
  std::ofstream(dir / "s.json") << R"({"outcome": "outcome", "first_treated": "first_treated"})";
  EXPECT_EQ(run("match --input panel.csv --schema s.json --out design.json", dir), 2);
  EXPECT_FALSE(fs::exists(dir / "design.json"));
}

TEST(Cli, PipelineIsByteIdenticalAcrossRuns) {
  const fs::path a = fresh_dir("run_a"), b = fresh_dir("run_b");
  pipeline(a);
  pipeline(b);
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == "err.txt") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 14);
  const std::string report = slurp(a / "report.txt");
  EXPECT_EQ(std::count(report.begin(), report.end(), '('), 18);
}

TEST(Cli, UsageErrorsAndBadArtifacts) {
  const fs::path dir = fresh_dir("usage");
  EXPECT_NE(run("", dir), 0);
  std::ofstream(dir / "x.json") << R"({"schema_version": 1, "kind": "design", "data": {}})";
  EXPECT_EQ(run("infer --att x.json --out s.json", dir), 4);
  EXPECT_EQ(run("infer --att missing.json --out s.json", dir), 3);
}
