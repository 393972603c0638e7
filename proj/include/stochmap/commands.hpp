#pragma once

#include "stochmap/scenario.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace stochmap {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitConvergence = 3, kExitPhysics = 4 };

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=" or ">="
  double tolerance = 0.0;
  bool pass = false;
  bool physics = true;  // a failing physics check sets exit code 4
};

struct RunOptions {
  int threads = 1;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed_override;
  bool dump_trajectories = false;
  std::ostream* log = nullptr;
};

struct RunReport {
  std::string command;
  std::string scenario;
  int exit_code = kExitOk;
  std::string message;
  std::vector<Check> checks;
  std::vector<std::string> artifacts;

  Check& expect_le(const std::string& name, double value, double tol, bool physics = true);
  Check& expect_ge(const std::string& name, double value, double tol, bool physics = true);
  void note(const std::string& name, double value);  // informational, always passes
  bool all_pass() const;
  void settle();  // exit code 4 if a physics check failed and nothing worse happened
};

const std::vector<std::string>& command_names();

// Runs one command on a validated scenario, writing artifacts below out_dir.
RunReport run_command(const std::string& command, const ScenarioConfig& cfg, const RunOptions& opts,
                      const std::string& out_dir);

// noise-sample, cumulants, map-build, unravel, and where applicable quadratic and expand, each in a subdirectory.
RunReport run_verify(const ScenarioConfig& cfg, const RunOptions& opts, const std::string& out_dir);

// Loads the config, dispatches, writes summary.json and returns the exit code.
int run(const std::string& command, const std::string& config_path, const RunOptions& opts);

void write_summary(const std::string& path, const RunReport& report);

}  // namespace stochmap
