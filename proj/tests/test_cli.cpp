#include "sympop/config.hpp"
#include "sympop/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

using namespace sympop;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"([game]
type = linear
payoff =
  0, -1, 1
  1, 0, -1
  -1, 1, 0

[protocol]
kind = constant
c = 1

[run]
N = 2
horizon = 1
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sympop_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string env_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

const std::string kExamples = env_or("SYMPOP_EXAMPLES", SYMPOP_EXAMPLES_DIR);
const std::string kCli = env_or("SYMPOP_CLI", SYMPOP_CLI_PATH);

ExperimentConfig load(const std::string& name) {
  const fs::path path = fs::path(kExamples) / name;
  if (!fs::exists(path)) throw std::runtime_error("missing example " + path.string());
  return parse_config(slurp(path));
}

std::string value_of(const std::string& report, const std::string& key) {
  const auto pos = report.find(key + ": ");
  if (pos == std::string::npos) return {};
  const auto start = pos + key.size() + 2;
  return report.substr(start, report.find('\n', start) - start);
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.run.dt, 0.01);
  EXPECT_DOUBLE_EQ(cfg.run.effective_burn_in(), 0.1);
  EXPECT_EQ(cfg.game.payoffs.front(), rock_paper_scissors());
  EXPECT_EQ(cfg.run.N, (std::vector<std::int64_t>{2}));
  EXPECT_EQ(cfg.run.factor, FactorVariant::standard);
}

TEST(Config, NonSquarePayoff) {
  const auto msg = config_error("[game]\npayoff =\n  0, 1\n  1, 0\n  1, 1\n[protocol]\nkind = constant\nc = 1\n");
  EXPECT_NE(msg.find("[game] line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
}

TEST(Config, UnknownKeyHint) {
  const auto msg = config_error(std::string(kMinimal) + "protocl = 1\n");
  EXPECT_NE(msg.find("unknown key 'protocl'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("protocol"), std::string::npos) << msg;
  const auto msg2 = config_error(std::string(kMinimal) + "horizn = 1\n");
  EXPECT_NE(msg2.find("did you mean 'horizon'"), std::string::npos) << msg2;
}

TEST(Config, AllErrorsCollected) {
  const auto msg = config_error("[game]\ntype = cubic\npayoff = 1, 2\n[protocol]\nkind = constant\n[run]\nN = -1\nfactor = typo\n");
  EXPECT_NE(msg.find("type must be"), std::string::npos);
  EXPECT_NE(msg.find("c is required"), std::string::npos);
  EXPECT_NE(msg.find("N must be positive"), std::string::npos);
  EXPECT_NE(msg.find("must be square"), std::string::npos);
  EXPECT_NE(msg.find("factor must be"), std::string::npos);
}

TEST(Config, TableDimensionMismatch) {
  const auto msg = config_error(std::string(kMinimal) + "[protocol]\nc = 2\n");
  EXPECT_NE(msg.find("duplicate key 'c'"), std::string::npos) << msg;
  const auto msg2 = config_error(
      "[game]\npayoff =\n  0, 1\n  1, 0\n[protocol]\nkind = table\ntable =\n  0, 1, 1\n  1, 0, 1\n  1, 1, 0\n");
  EXPECT_NE(msg2.find("game has 2 strategies"), std::string::npos) << msg2;
}

TEST(Config, MultiPopulation) {
  const auto cfg = load("two_populations.cfg");
  EXPECT_EQ(cfg.game.populations, 2);
  EXPECT_EQ(cfg.game.payoffs[0].rows(), 2);
  EXPECT_EQ(cfg.game.payoffs[1].rows(), 3);
  EXPECT_EQ(cfg.run.N, (std::vector<std::int64_t>{3, 3}));
}

TEST(Config, ExampleCorpusParses) {
  for (const char* name : {"constant_n3.cfg", "rps_sum_exponential.cfg", "coordination_table.cfg",
                           "five_strategies.cfg", "two_populations.cfg", "constant_payoffs.cfg",
                           "asymmetric_table.cfg", "desk_scale.cfg"}) {
    EXPECT_NO_THROW(load(name)) << name;
  }
  EXPECT_THROW(load("invalid_shape.cfg"), ConfigError);
}

TEST(Config, HashIsStable) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(parse_config(kMinimal).hash, parse_config(kMinimal).hash);
}

TEST(Lattice, LargestRemainderRounding) {
  const auto l = round_to_lattice(SocialState{{(Vector(3) << 0.5, 0.3, 0.2).finished()}}, {4});
  EXPECT_EQ(l.counts[0], (std::vector<std::int64_t>{2, 1, 1}));
  const auto exact = round_to_lattice(SocialState{{(Vector(3) << 0.5, 0.3, 0.2).finished()}}, {1000});
  EXPECT_EQ(exact.counts[0], (std::vector<std::int64_t>{500, 300, 200}));
}

TEST(Run, ExperimentReportsGap) {
  const auto dir = scratch("experiment");
  std::ostringstream out, err;
  ASSERT_EQ(run_command("experiment", load("constant_n3.cfg"), dir, out, err), 0) << err.str();
  const auto report = slurp(dir / "report.txt");
  EXPECT_NEAR(std::stod(value_of(report, "tv_predicted_vs_exact")), 2.0 / 15, 1e-6);
  for (const char* f : {"trajectory.csv", "exact.csv", "predicted.csv", "marginals.csv", "compare.txt",
                        "transformed.txt", "path_seed1.csv", "occupancy_seed1.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto exact = slurp(dir / "exact.csv");
  EXPECT_NE(exact.find("# config_hash: "), std::string::npos);
  EXPECT_NE(exact.find("# variant_factor: standard"), std::string::npos);
  EXPECT_NE(exact.find("state_counts,probability,provenance\n"), std::string::npos);
}

TEST(Run, ValidateAsymmetric) {
  const auto dir = scratch("validate");
  std::ostringstream out, err;
  EXPECT_NE(run_command("validate", load("asymmetric_table.cfg"), dir, out, err), 0);
  const auto report = slurp(dir / "validation.txt");
  EXPECT_EQ(value_of(report, "symmetric"), "false");
  EXPECT_EQ(value_of(report, "max_asymmetry"), "0.5");
}

TEST(Run, ValidateSymmetric) {
  const auto dir = scratch("validate_ok");
  std::ostringstream out, err;
  EXPECT_EQ(run_command("validate", load("rps_sum_exponential.cfg"), dir, out, err), 0) << err.str();
}

TEST(Run, MeanDynamicRows) {
  const auto dir = scratch("mean_dynamic");
  std::ostringstream out, err;
  ASSERT_EQ(run_command("mean-dynamic", parse_config(kMinimal), dir, out, err), 0) << err.str();
  std::ifstream in(dir / "trajectory.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 102);
}

TEST(Run, FailureRemovesArtifacts) {
  const auto dir = scratch("failure");
  std::ostringstream out, err;
  EXPECT_EQ(run_command("experiment", load("asymmetric_table.cfg"), dir, out, err), 2);
  EXPECT_NE(err.str().find("max_asymmetry"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "validation.txt"));
  EXPECT_FALSE(fs::exists(dir / "exact.csv"));
  EXPECT_TRUE(!fs::exists(dir) || fs::is_empty(dir));
}

TEST(Run, MissingSection) {
  const auto dir = scratch("missing");
  std::ostringstream out, err;
  auto cfg = parse_config(kMinimal);
  cfg.run.seeds.clear();
  EXPECT_EQ(run_command("simulate", cfg, dir, out, err), 2);
  EXPECT_NE(err.str().find("seeds"), std::string::npos);
}

TEST(Run, Reproducible) {
  const auto a = scratch("repro_a");
  const auto b = scratch("repro_b");
  std::ostringstream out, err;
  const auto cfg = load("rps_sum_exponential.cfg");
  ASSERT_EQ(run_command("experiment", cfg, a, out, err), 0) << err.str();
  ASSERT_EQ(run_command("experiment", cfg, b, out, err), 0) << err.str();
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
  EXPECT_GT(files, 5u);
}

TEST(Run, UnknownCommand) {
  std::ostringstream out, err;
  EXPECT_EQ(run_command("plot", parse_config(kMinimal), scratch("unknown"), out, err), 2);
}

TEST(Cli, BinaryExitCodes) {
  if (!fs::exists(kCli)) GTEST_SKIP() << "cli binary not built";
  const std::string& cli = kCli;
  const std::string& examples = kExamples;
  const auto dir = scratch("cli");
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run(fmt::format("predict --config {}/constant_n3.cfg --out {}", examples, dir.string())), 0);
  EXPECT_TRUE(fs::exists(dir / "predicted.csv"));
  EXPECT_EQ(run(fmt::format("validate --config {}/asymmetric_table.cfg --out {}", examples, dir.string())), 1);
  EXPECT_EQ(run(fmt::format("validate --config {}/invalid_shape.cfg --out {}", examples, dir.string())), 2);
  // At N = 2 the printed factor kills every count above zero, so conditioning leaves nothing.
  EXPECT_EQ(run(fmt::format("predict --config {}/constant_n3.cfg --out {} --variant-factor paper", examples,
                            (dir / "paper2").string())),
            2);
  EXPECT_EQ(run(fmt::format("predict --config {}/rps_sum_exponential.cfg --out {} --variant-factor paper", examples,
                            (dir / "paper").string())),
            0);
  EXPECT_EQ(value_of(slurp(dir / "paper" / "report.txt"), "degenerate_weights"), "true");
  EXPECT_EQ(run(fmt::format("simulate --config {}/constant_n3.cfg --out {} --seed-override 5,6", examples,
                            (dir / "seeds").string())),
            0);
  EXPECT_TRUE(fs::exists(dir / "seeds" / "path_seed6.csv"));
  EXPECT_FALSE(fs::exists(dir / "seeds" / "path_seed1.csv"));
}
