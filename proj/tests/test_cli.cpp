#include "flowlab/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace flowlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "flowlab_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

int exit_status(int raw) { return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1; }

// Runs the built binary; stderr goes to <dir>/stderr.txt.
int run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const std::string cmd =
      env + " '" + std::string(FLOWLAB_CLI_PATH) + "' " + args + " 2> '" + (dir / "stderr.txt").string() + "'";
  return exit_status(std::system(cmd.c_str()));
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const char* kGradient = R"({
  "system": {"name": "ornstein_uhlenbeck", "params": {"theta": 1.0, "sigma": 1.0}},
  "mc": {"n_paths": 400, "master_seed": 9},
  "integrator": {"h": 0.01},
  "gradient": {"x": [0.5], "payoff": "sine", "method": "both"}
})";

const char* kGradientReordered = R"({
  "gradient": {"method": "both", "payoff": "sine", "x": [0.5]},
  "integrator": {"h": 0.01},
  "mc": {"master_seed": 9, "n_paths": 400},
  "system": {"params": {"sigma": 1.0, "theta": 1.0}, "name": "ornstein_uhlenbeck"}
})";

ExperimentConfig resolve(const std::string& command, const std::string& text, const Overrides& ov = {}) {
  return resolve_config(command, parse_json_text(text), ov);
}

std::string config_error(const std::string& command, const std::string& text) {
  try {
    resolve(command, text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing and validation

TEST(Config, MinimalGradientMaterializesDefaults) {
  const auto cfg = resolve("gradient", R"({"system": {"name": "ornstein_uhlenbeck"}})");
  const auto& r = cfg.resolved;
  EXPECT_EQ(r["schema"], kConfigSchema);
  EXPECT_DOUBLE_EQ(r["integrator"]["h"].get<double>(), 1e-3);
  EXPECT_EQ(r["mc"]["n_paths"].get<std::uint64_t>(), 100000u);
  EXPECT_EQ(r["mc"]["master_seed"].get<std::uint64_t>(), 0u);
  EXPECT_EQ(r["gradient"]["payoff"], "identity");
  EXPECT_EQ(r["gradient"]["method"], "bel");
  EXPECT_DOUBLE_EQ(r["gradient"]["t"].get<double>(), 1.0);
  EXPECT_TRUE(r["output"].contains("directory"));
  EXPECT_EQ(cfg.sim.n_paths, 100000u);
  EXPECT_EQ(cfg.gradient.x.size(), 1);
  EXPECT_EQ(cfg.hash.size(), 16u);
}

TEST(Config, HashIgnoresKeyOrder) {
  EXPECT_EQ(resolve("gradient", kGradient).hash, resolve("gradient", kGradientReordered).hash);
}

TEST(Config, HashTracksContentButNotWorkersOrOutput) {
  const auto base = resolve("gradient", kGradient).hash;
  EXPECT_EQ(resolve("gradient", kGradient, {std::nullopt, 8, "/tmp/elsewhere"}).hash, base);
  EXPECT_NE(resolve("gradient", kGradient, {10u, std::nullopt, std::nullopt}).hash, base);
  std::string changed = kGradient;
  changed.replace(changed.find("\"sine\""), 6, "\"gaussian\"");
  EXPECT_NE(resolve("gradient", changed).hash, base);
}

TEST(Config, OverridesLandInEcho) {
  const auto cfg = resolve("gradient", kGradient, {77u, 3, "out_here"});
  EXPECT_EQ(cfg.sim.seed, 77u);
  EXPECT_EQ(cfg.sim.workers, 3);
  EXPECT_EQ(cfg.resolved["mc"]["master_seed"].get<std::uint64_t>(), 77u);
  EXPECT_EQ(cfg.resolved["output"]["directory"], "out_here");
}

TEST(Config, DuplicateKeyIsParseError) {
  EXPECT_THROW(parse_json_text(R"({"mc": {"n_paths": 1, "n_paths": 2}})"), ConfigError);
  const auto msg = config_error("gradient", R"({"system": {"name": "constant"}, "system": {"name": "constant"}})");
  EXPECT_NE(msg.find("duplicate key 'system'"), std::string::npos) << msg;
}

TEST(Config, SameKeyInSiblingObjectsIsFine) {
  EXPECT_NO_THROW(parse_json_text(R"({"a": {"x": 1}, "b": {"x": 2}})"));
}

TEST(Config, SyntaxErrorReportsPosition) {
  const auto msg = config_error("gradient", "{\n  \"system\": {\"name\": \"constant\",}\n}");
  EXPECT_NE(msg.find("parse error"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(Config, UnknownKeysRejectedByName) {
  EXPECT_NE(config_error("gradient", R"({"system": {"name": "constant"}, "extra": 1})").find("'extra'"),
            std::string::npos);
  EXPECT_NE(config_error("gradient", R"({"system": {"name": "constant"}, "mc": {"paths": 1}})").find("mc.paths"),
            std::string::npos);
  EXPECT_NE(config_error("gradient", R"({"system": {"name": "constant", "params": {"theta": 1}}})").find("theta"),
            std::string::npos);
}

TEST(Config, ValidationErrorsNameTheKey) {
  EXPECT_NE(config_error("gradient", R"({"system": {"name": "constant"}, "integrator": {"h": -1}})")
                .find("integrator.h"),
            std::string::npos);
  EXPECT_NE(config_error("gradient", R"({"system": {"name": "constant"}, "gradient": {"payoff": "cubic"}})")
                .find("gradient.payoff"),
            std::string::npos);
  EXPECT_NE(config_error("gradient", R"({"system": {"name": "constant", "params": {"d": 2}}, "gradient": {"x": [1]}})")
                .find("gradient.x"),
            std::string::npos);
  EXPECT_FALSE(config_error("gradient", R"({"schema": "other/2", "system": {"name": "constant"}})").empty());
  EXPECT_FALSE(config_error("gradient", R"({"system": {"name": "nope"}})").empty());
  EXPECT_FALSE(config_error("fly", R"({"system": {"name": "constant"}})").empty());
}

TEST(Config, ConvergeEpsMustStayBelowCeiling) {
  const auto msg = config_error("converge", R"({"system": {"name": "example21"}, "converge": {"eps": [0.2, 0.1]}})");
  EXPECT_NE(msg.find("converge.eps"), std::string::npos) << msg;
  EXPECT_NO_THROW(
      resolve("converge", R"({"system": {"name": "example21"}, "converge": {"eps": [0.2, 0.1], "eps_ceiling": 0.3}})"));
}

TEST(Config, ShippedExamplesResolve) {
  for (const auto& [file, command] : std::vector<std::pair<std::string, std::string>>{
           {"ou_gradient.json", "gradient"},
           {"example21_check.json", "check"},
           {"example21_converge.json", "converge"},
           {"gbm_ibp.json", "ibp"},
           {"additive_krylov.json", "krylov"},
           {"ou_moments.json", "moments"},
           {"zero_simulate.json", "simulate"}}) {
    EXPECT_NO_THROW(parse_config(command, std::string(FLOWLAB_SOURCE_DIR) + "/configs/" + file)) << file;
  }
}

// ---------------------------------------------------------------------------
// In-process runs

TEST(RunCommand, InvalidExample21ParametersExitTwo) {
  const auto dir = scratch("q3");
  const auto cfg = write(dir / "bad.json", R"({"system": {"name": "example21", "params": {"d": 2, "q3": 0.7}},
    "output": {"directory": ")" + (dir / "out").string() + R"("}})");
  std::ostringstream err;
  EXPECT_EQ(run_command("check", cfg.string(), {}, err), kExitInvalid);
  EXPECT_NE(err.str().find("q3 < d/(d+1)"), std::string::npos) << err.str();
  EXPECT_FALSE(fs::exists(dir / "out" / "result.csv"));
}

TEST(RunCommand, ArtifactsAndProvenance) {
  const auto dir = scratch("artifacts");
  const auto cfg = write(dir / "g.json", kGradient);
  std::ostringstream err;
  ASSERT_EQ(run_command("gradient", cfg.string(), {std::nullopt, std::nullopt, (dir / "out").string()}, err), kExitOk)
      << err.str();
  const auto rows = lines(slurp(dir / "out" / "result.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], kResultHeader);
  const auto hash = resolve("gradient", kGradient).hash;
  EXPECT_EQ(rows[1].rfind("bel_gradient,ornstein_uhlenbeck," + hash + ",", 0), 0u) << rows[1];
  EXPECT_EQ(rows[2].rfind("fd_gradient,ornstein_uhlenbeck," + hash + ",", 0), 0u) << rows[2];
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NE(rows[i].find("seed=9"), std::string::npos) << rows[i];

  const auto echo = parse_json_text(slurp(dir / "out" / "config.echo.json"));
  EXPECT_EQ(echo["integrator"]["guard_radius"].get<double>(), 1e6);
  EXPECT_EQ(echo["gradient"]["delta"].get<double>(), 1e-3);
  EXPECT_EQ(resolve_config("gradient", echo).hash, hash);

  const auto log = slurp(dir / "out" / "run.log");
  EXPECT_NE(log.find("hash " + hash), std::string::npos);
  EXPECT_NE(log.find("elapsed_seconds"), std::string::npos);
  EXPECT_NE(log.find("failures="), std::string::npos) << log;
}

TEST(RunCommand, ZeroCoefficientsGiveConstantTrajectory) {
  const auto dir = scratch("zero");
  std::ostringstream err;
  ASSERT_EQ(run_command("simulate", std::string(FLOWLAB_SOURCE_DIR) + "/configs/zero_simulate.json",
                        {std::nullopt, std::nullopt, dir.string()}, err),
            kExitOk)
      << err.str();
  const auto rows = lines(slurp(dir / "trajectory.csv"));
  ASSERT_EQ(rows.size(), 12u);  // header + 11 grid times
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto tail = rows[i].substr(rows[i].find(',') + 1);
    EXPECT_EQ(tail, rows[1].substr(rows[1].find(',') + 1)) << rows[i];
  }
  EXPECT_NE(rows[1].find(",1,-2,1,0"), std::string::npos) << rows[1];
}

TEST(RunCommand, ExplodingRunIsUnreliable) {
  const auto dir = scratch("unreliable");
  const auto cfg = write(dir / "boom.json", R"({
    "system": {"name": "geometric_bm", "params": {"mu": 3.0, "sigma": 1.0}},
    "integrator": {"h": 0.01, "T": 1.0, "guard_radius": 5.0},
    "mc": {"n_paths": 200},
    "gradient": {"x": [1.0]}
  })");
  std::ostringstream err;
  EXPECT_EQ(run_command("gradient", cfg.string(), {std::nullopt, std::nullopt, dir.string()}, err), kExitUnreliable);
  EXPECT_NE(slurp(dir / "run.log").find("status unreliable"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "result.csv"));
}

TEST(RunCommand, UnwritableOutputIsFailure) {
  const auto dir = scratch("blocked");
  write(dir / "file", "not a directory");
  const auto cfg = write(dir / "g.json", kGradient);
  std::ostringstream err;
  EXPECT_EQ(run_command("gradient", cfg.string(), {std::nullopt, std::nullopt, (dir / "file" / "sub").string()}, err),
            kExitFailure);
}

TEST(RunCommand, MissingFileIsInvalid) {
  std::ostringstream err;
  EXPECT_EQ(run_command("gradient", "/nonexistent/flowlab.json", {}, err), kExitInvalid);
}

// ---------------------------------------------------------------------------
// Binary

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary_exit");
  const auto good = write(dir / "g.json", kGradient);
  EXPECT_EQ(run_cli("gradient '" + good.string() + "' --out '" + (dir / "o").string() + "'", dir), 0);
  EXPECT_EQ(run_cli("gradient '" + (dir / "missing.json").string() + "'", dir), 2);
  EXPECT_EQ(run_cli("teleport '" + good.string() + "' --out '" + (dir / "o2").string() + "'", dir), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("unknown command"), std::string::npos);
  EXPECT_EQ(run_cli("gradient '" + good.string() + "' --workers 0", dir), 2);
  EXPECT_EQ(run_cli("gradient", dir), 2);
}

TEST(Binary, Example21ConstraintMessage) {
  const auto dir = scratch("binary_q3");
  const auto cfg = write(dir / "bad.json", R"({"system": {"name": "example21", "params": {"d": 2, "q3": 0.7}}})");
  EXPECT_EQ(run_cli("check '" + cfg.string() + "' --out '" + (dir / "o").string() + "'", dir), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("q3 < d/(d+1)"), std::string::npos);
}

TEST(Binary, OutputDirectoryFallsBackToEnvironment) {
  const auto dir = scratch("binary_env");
  const auto cfg = write(dir / "g.json", kGradient);
  ASSERT_EQ(run_cli("gradient '" + cfg.string() + "'", dir, "FLOWLAB_OUT='" + (dir / "env_out").string() + "'"), 0);
  EXPECT_TRUE(fs::exists(dir / "env_out" / "result.csv"));
  EXPECT_TRUE(fs::exists(dir / "env_out" / "config.echo.json"));
  EXPECT_TRUE(fs::exists(dir / "env_out" / "run.log"));

  // --out beats the environment
  ASSERT_EQ(run_cli("gradient '" + cfg.string() + "' --out '" + (dir / "flag_out").string() + "'", dir,
                    "FLOWLAB_OUT='" + (dir / "env_out2").string() + "'"),
            0);
  EXPECT_TRUE(fs::exists(dir / "flag_out" / "result.csv"));
  EXPECT_FALSE(fs::exists(dir / "env_out2"));
}

TEST(Binary, ResultIsByteIdenticalAcrossWorkersAndReruns) {
  const auto dir = scratch("binary_workers");
  const auto cfg = write(dir / "g.json", kGradient);
  std::string first;
  for (int workers : {1, 4, 8, 1}) {
    const auto out = dir / ("w" + std::to_string(workers));
    fs::remove_all(out);
    ASSERT_EQ(run_cli("gradient '" + cfg.string() + "' --workers " + std::to_string(workers) + " --out '" +
                          out.string() + "'",
                      dir),
              0);
    const auto csv = slurp(out / "result.csv");
    if (first.empty()) first = csv;
    EXPECT_EQ(csv, first) << "workers=" << workers;
  }
}

TEST(Binary, SeedFlagOverridesConfig) {
  const auto dir = scratch("binary_seed");
  const auto cfg = write(dir / "g.json", kGradient);
  ASSERT_EQ(run_cli("gradient '" + cfg.string() + "' --seed 123 --out '" + (dir / "o").string() + "'", dir), 0);
  const auto rows = lines(slurp(dir / "o" / "result.csv"));
  ASSERT_GE(rows.size(), 2u);
  EXPECT_NE(rows[1].find("seed=123"), std::string::npos);
  EXPECT_EQ(parse_json_text(slurp(dir / "o" / "config.echo.json"))["mc"]["master_seed"].get<std::uint64_t>(), 123u);
}
