#include "cmetric/pipeline.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace cmetric {
namespace {

const fs::path kSource = CMETRIC_SOURCE_DIR;

const char* kLinear = R"(
[system]
name = "linear"
matrix = [[-1.0, 0.0], [0.0, -1.0]]

[kernel]
c = 0.3

[collocation]
spacing = 0.4
lo = [-1.0, -1.0]
hi = [1.0, 1.0]

[triangulation]
lo = [-1.0, -1.0]
hi = [1.0, 1.0]
rho = 0.1

[verification]
eps0 = 0.1
)";

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("cmetric_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& body) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  static int cli(const std::string& args) {
    const std::string cmd = std::string(CMETRIC_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST_F(PipelineTest, ShippedConfigsParse) {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(kSource / "configs")) {
    if (entry.path().extension() != ".toml") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 5);
}

TEST_F(PipelineTest, ConfigDefaults) {
  const PipelineConfig cfg = load_config(write_config("a.toml", kLinear));
  EXPECT_EQ(cfg.kernel_k, 4);
  EXPECT_EQ(cfg.kernel_c, 0.3);
  EXPECT_EQ(cfg.mode, Mode::Relaxed);
  EXPECT_EQ(cfg.triangulation.d, 2.0 * std::sqrt(2.0));
  EXPECT_EQ(cfg.C, SymMatrix::identity(2));
  EXPECT_EQ(cfg.collocation.grid, "hexagonal");
  EXPECT_EQ(cfg.out_dir, dir_ / "out");
}

TEST_F(PipelineTest, ConfigErrors) {
  EXPECT_THROW(load_config(dir_ / "missing.toml"), ConfigError);
  EXPECT_THROW(load_config(write_config("b.toml", "[system\nname = 1")), ConfigError);
  EXPECT_THROW(load_config(write_config("c.toml", std::string(kLinear) + "\n[pipeline]\nmode = \"fast\"\n")),
               ConfigError);
  std::string two = kLinear;
  two.replace(two.find("rho = 0.1"), 9, "rho = 0.1\nvertices_per_axis = [3, 3]");
  EXPECT_THROW(load_config(write_config("d.toml", two)), ConfigError);
  std::string small_d = kLinear;
  small_d.replace(small_d.find("rho = 0.1"), 9, "rho = 0.1\nd = 2.0");
  EXPECT_THROW(load_config(write_config("e.toml", small_d)), ConfigError);
  std::string unknown = kLinear;
  unknown.replace(unknown.find("\"linear\""), 8, "\"lorenz\"");
  EXPECT_THROW(load_config(write_config("f.toml", unknown)), ConfigError);
}

TEST_F(PipelineTest, MalformedConfigExitsTwoWithoutArtifacts) {
  const fs::path cfg = write_config("bad.toml", "[system]\nname = \"linear\"\n");
  EXPECT_EQ(cli("run --config " + cfg.string() + " --out " + (dir_ / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
  EXPECT_EQ(cli("run --config " + (dir_ / "none.toml").string()), 2);
  EXPECT_EQ(cli("run"), 2);
  EXPECT_EQ(cli("run --config " + cfg.string() + " --mode fast"), 2);
}

TEST_F(PipelineTest, LinearStrictSucceeds) {
  const fs::path cfg = write_config("lin.toml", kLinear);
  const fs::path out = dir_ / "out";
  EXPECT_EQ(cli("run --config " + cfg.string() + " --out " + out.string() + " --mode strict"), 0);
  for (const char* f : {"recovery.json", "vertices.csv", "simplices.csv", "report_vertices.csv",
                        "report_simplices.csv", "summary.json", "run.log"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(j["pass_fraction"], 1.0);
  EXPECT_EQ(j["pipeline"]["exit_code"], 0);
  EXPECT_EQ(j["pipeline"]["mode"], "strict");
}

TEST_F(PipelineTest, SolveThenVerifyMatchesRun) {
  const fs::path cfg = write_config("lin.toml", kLinear);
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(cli("run --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(cli("solve --config " + cfg.string() + " --out " + b.string()), 0);
  EXPECT_TRUE(fs::exists(b / "recovery.json"));
  EXPECT_FALSE(fs::exists(b / "vertices.csv"));
  ASSERT_EQ(cli("verify --config " + cfg.string() + " --out " + b.string()), 0);
  for (const char* f : {"recovery.json", "vertices.csv", "simplices.csv", "report_vertices.csv",
                        "report_simplices.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST_F(PipelineTest, VerifyWithoutRecoveryExitsTwo) {
  const fs::path cfg = write_config("lin.toml", kLinear);
  EXPECT_EQ(cli("verify --config " + cfg.string() + " --out " + (dir_ / "x").string()), 2);
}

TEST_F(PipelineTest, CrossSystemNeedsOptIn) {
  const fs::path cfg = write_config("lin.toml", kLinear);
  const fs::path out = dir_ / "out";
  ASSERT_EQ(cli("solve --config " + cfg.string() + " --out " + out.string()), 0);
  std::string other = kLinear;
  other.replace(other.find("[[-1.0, 0.0], [0.0, -1.0]]"), 26, "[[-1.0, 0.1], [0.0, -1.0]]");
  const fs::path o = write_config("other.toml", other);
  const std::string rec = " --recovery " + (out / "recovery.json").string();
  EXPECT_EQ(cli("verify --config " + o.string() + " --out " + (dir_ / "o1").string() + rec), 2);
  const fs::path ok = write_config("ok.toml", other + "cross_system = true\n");
  EXPECT_EQ(cli("verify --config " + ok.string() + " --out " + (dir_ / "o2").string() + rec), 0);
  EXPECT_TRUE(fs::exists(dir_ / "o2" / "report_simplices.csv"));
}

TEST_F(PipelineTest, RecoveryVersionMismatchExitsTwo) {
  const fs::path cfg = write_config("lin.toml", kLinear);
  const fs::path out = dir_ / "out";
  ASSERT_EQ(cli("solve --config " + cfg.string() + " --out " + out.string()), 0);
  auto j = nlohmann::json::parse(slurp(out / "recovery.json"));
  j["version"] = kRecoveryFormatVersion + 1;
  std::ofstream(out / "recovery.json") << j.dump();
  EXPECT_EQ(cli("verify --config " + cfg.string() + " --out " + out.string()), 2);
}

TEST_F(PipelineTest, IllConditionedExitsThree) {
  const fs::path cfg = write_config("ill.toml", std::string(kLinear) + "\n[solve]\nmax_condition = 1.0\n");
  EXPECT_EQ(cli("run --config " + cfg.string() + " --out " + (dir_ / "out").string()), 3);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "run.log"));
  EXPECT_EQ(cli("solve --config " + cfg.string() + " --out " + (dir_ / "s").string()), 3);
}

TEST_F(PipelineTest, StrictCapsExhaustedExitsFour) {
  std::string body = kLinear;
  body.replace(body.find("eps0 = 0.1"), 10, "eps0 = 0.9");
  body += "\n[pipeline]\nmax_collocation_refinements = 1\nmax_triangulation_refinements = 0\n";
  const fs::path cfg = write_config("caps.toml", body);
  const fs::path out = dir_ / "out";
  EXPECT_EQ(cli("run --config " + cfg.string() + " --out " + out.string() + " --mode strict"), 4);
  EXPECT_TRUE(fs::exists(out / "report_simplices.csv"));
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(j["pipeline"]["exit_code"], 4);
  EXPECT_EQ(j["pipeline"]["iterations"], 2);
  EXPECT_EQ(cli("run --config " + cfg.string() + " --out " + (dir_ / "r").string()), 0);
  EXPECT_EQ(cli("solve --config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_EQ(cli("verify --config " + cfg.string() + " --out " + out.string() + " --mode strict"), 4);
}

TEST_F(PipelineTest, ThreadCountDoesNotChangeOutput) {
  const fs::path cfg = kSource / "configs" / "vanderpol_desk.toml";
  const fs::path a = dir_ / "t1", b = dir_ / "t2";
  ASSERT_EQ(cli("run --config " + cfg.string() + " --out " + a.string() + " --threads 1"), 0);
  ASSERT_EQ(cli("run --config " + cfg.string() + " --out " + b.string() + " --threads 2"), 0);
  for (const char* f : {"recovery.json", "vertices.csv", "simplices.csv", "report_vertices.csv",
                        "report_simplices.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

}  // namespace
}  // namespace cmetric
