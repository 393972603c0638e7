#pragma once

#include "stochmap/core.hpp"
#include "stochmap/environment.hpp"
#include "stochmap/gaussian.hpp"
#include "stochmap/noise.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochmap {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnvironmentConfig {
  std::vector<BosonicMode> modes;
  std::vector<std::vector<double>> couplings;  // [label][mode]
};

struct ScenarioConfig {
  std::string name;
  std::string source_dir;  // directory of the config file, for relative paths

  double t_max = 1.0;
  int n_steps = 10;

  OperatorFamily family;
  bool quadratic = false;
  int fock_boundary = 0;  // top Fock levels excluded from the c-number check
  Vec psi0;

  std::optional<EnvironmentConfig> environment;
  std::optional<NoiseSpec> noise;
  std::optional<BathSplit> match_bath;  // explicit directive
  double split_scale = 0.5;

  int n_traj = 1000;
  std::uint64_t master_seed = 1;
  int groups = 20;

  int cumulant_order = 2;
  int node_limit = 6;
  int depth = 1;
  double series_eps = 0.0;
  int n_max = 20;
  int expand_order = 3;
  std::vector<double> expand_scales = {0.25, 0.5, 1.0};

  std::optional<double> dephasing_tolerance;  // enables the closed-form coherence check

  std::string out_dir = "out";
  bool dump_trajectories = false;
  int dump_count = 10;

  TimeGrid grid() const { return TimeGrid(t_max, n_steps); }
  int labels() const { return family.size(); }
};

// Reads and validates a JSON scenario; all failures are ConfigError.
ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& text, const std::string& source_dir = ".");

// Named operator for the given dimension: identity, sigma_x/y/z, sigma_plus, sigma_minus, a, a_dag, x, p, number.
Mat named_operator(const std::string& name, int dim);

}  // namespace stochmap
