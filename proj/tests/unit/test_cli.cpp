#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stochmap/commands.hpp"
#include "stochmap/csv.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stochmap;
using testutil::max_abs;
namespace fs = std::filesystem;

namespace {

const std::string kSource = STOCHMAP_SOURCE_DIR;

std::string minimal(const std::string& extra) {
  return R"({"grid": {"t_max": 1.0, "n_steps": 8},
             "system": {"dimension": 2, "H0": {"op": "sigma_z", "scale": 0.5},
                        "operators": [{"label": "x", "op": "sigma_x"}]})" +
         extra + "}";
}

const std::string kNoise = R"(, "noise": {"covariance": [{"type": "exponential", "amplitude": 0.2, "correlation_time": 0.5}]})";
const std::string kEnv = R"(, "environment": {"modes": [{"frequency": 1.0, "levels": 4}], "couplings": [[0.3]]})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("stochmap_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("scenario parsing builds the operator family") {
  ScenarioConfig c = parse_scenario(minimal(kNoise));
  CHECK(c.family.dim() == 2);
  CHECK(c.labels() == 1);
  CHECK(c.family.labels()[0] == "x");
  CHECK(max_abs(c.family.h0() - 0.5 * pauli_z()) == 0.0);
  CHECK(c.noise.has_value());
  CHECK_FALSE(c.environment.has_value());
  CHECK(std::abs(c.psi0(0) - 1.0) == 0.0);
  CHECK(c.grid().nodes() == 9);
}

TEST_CASE("explicit matrices and complex scales") {
  ScenarioConfig c = parse_scenario(R"({"grid": {"t_max": 1, "n_steps": 2},
      "system": {"dimension": 2, "H0": [{"op": "sigma_z"}, {"matrix": [[1, 0], [0, [1, 0]]]}],
                 "operators": [{"matrix": [[0, [0, -1]], [[0, 1], 0]], "scale": 2}]},
      "noise": {}})");
  CHECK(max_abs(c.family.h0() - (pauli_z() + Mat::Identity(2, 2))) == 0.0);
  CHECK(max_abs(c.family.op(0) - 2.0 * pauli_y()) == 0.0);
  CHECK_THROWS_AS(parse_scenario(R"({"grid": {"t_max": 1, "n_steps": 2},
      "system": {"dimension": 2, "operators": ["sigma_plus"]}, "noise": {}})"),
                  ConfigError);
}

TEST_CASE("schema violations are config errors") {
  CHECK_THROWS_AS(parse_scenario(minimal("")), ConfigError);                  // no origin
  CHECK_THROWS_AS(parse_scenario(minimal(kNoise + kEnv)), ConfigError);       // both, no directive
  CHECK_NOTHROW(parse_scenario(minimal(kNoise + kEnv + R"(, "match_bath": "circular")")));
  CHECK_THROWS_AS(parse_scenario(minimal(kNoise + R"(, "match_bath": "circular")")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(minimal(kEnv + R"(, "match_bath": "sideways")")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(minimal(kNoise + R"(, "colour": 1)")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(minimal(kNoise + R"(, "ensemble": {"n_traj": 10, "groups": 20})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"grid": {"t_max": -1, "n_steps": 4}})"), ConfigError);
}

TEST_CASE("named operators") {
  CHECK(max_abs(named_operator("x", 6) - (annihilation(6) + annihilation(6).adjoint()) / std::sqrt(2.0)) < 1e-15);
  CHECK(max_abs(named_operator("sigma_minus", 2) * named_operator("sigma_plus", 2) - Mat(0.5 * (Mat::Identity(2, 2) - pauli_z()))) <
        1e-15);
  CHECK_THROWS_AS(named_operator("sigma_x", 3), std::invalid_argument);
  CHECK_THROWS_AS(named_operator("spin", 2), std::invalid_argument);
}

TEST_CASE("exit codes of the driver") {
  fs::path dir = scratch("exit");
  RunOptions o;
  std::ostringstream log;
  o.log = &log;
  o.out_dir = (dir / "a").string();
  CHECK(run("map-build", kSource + "/tests/data/both_origins.json", o) == kExitConfig);
  o.out_dir = (dir / "b").string();
  CHECK(run("quadratic", kSource + "/tests/data/quadratic_qubit.json", o) == kExitConvergence);
  CHECK(log.str().find("NotCNumber") != std::string::npos);
  CHECK(run("map-build", kSource + "/tests/data/missing.json", o) == kExitConfig);

  ScenarioConfig noise_only = parse_scenario(minimal(kNoise));
  CHECK(run_command("quadratic", noise_only, o, (dir / "c").string()).exit_code == kExitConfig);
  CHECK(run_command("teleport", noise_only, o, (dir / "d").string()).exit_code == kExitConfig);
  fs::remove_all(dir);
}

TEST_CASE("unravel writes the ensemble and passes its trace bound") {
  fs::path dir = scratch("unravel");
  ScenarioConfig c = parse_scenario(minimal(kEnv + R"(, "ensemble": {"n_traj": 400, "master_seed": 4})"));
  RunOptions o;
  RunReport r = run_command("unravel", c, o, dir.string());
  CHECK(r.exit_code == kExitOk);
  CHECK(r.all_pass());
  auto rows = read_csv((dir / "ensemble_density.csv").string());
  CHECK(rows.size() == 1 + 9 * 4);
  CHECK(fs::exists(dir / "oracle_comparison.csv"));
  fs::remove_all(dir);
}

TEST_CASE("outputs are byte-identical across thread counts") {
  fs::path dir = scratch("determinism");
  ScenarioConfig c = load_scenario(kSource + "/scenarios/dephasing.json");
  c.n_traj = 600;
  RunOptions one, three;
  three.threads = 3;
  RunReport a = run_command("verify", c, one, (dir / "t1").string());
  RunReport b = run_command("verify", c, three, (dir / "t3").string());
  CHECK(a.exit_code == b.exit_code);
  REQUIRE(a.artifacts == b.artifacts);
  CHECK(a.artifacts.size() > 5);
  for (const auto& f : a.artifacts) CHECK_MESSAGE(slurp(dir / "t1" / f) == slurp(dir / "t3" / f), f);
  fs::remove_all(dir);
}
