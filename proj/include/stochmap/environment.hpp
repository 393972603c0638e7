#pragma once

#include "stochmap/core.hpp"
#include "stochmap/cumulants.hpp"

#include <memory>
#include <vector>

namespace stochmap {

struct EnvironmentSpec {
  std::vector<int> mode_dims;
  Mat h_env;
  std::vector<Mat> couplings;  // phi-hat_a, Schrodinger picture
  Mat rho_env;

  int dim() const { return static_cast<int>(h_env.rows()); }
  int labels() const { return static_cast<int>(couplings.size()); }
  // throws std::invalid_argument on inconsistent dimensions, non-Hermitian operators or a bad state
  void validate() const;
};

struct BosonicMode {
  double frequency = 1.0;
  int levels = 8;
  double temperature = 0.0;
};

// H_E = sum w_k a_k^dag a_k, phi_a = sum_k g[a][k] (a_k + a_k^dag)/sqrt(2), thermal or vacuum product state.
EnvironmentSpec bosonic_environment(const std::vector<BosonicMode>& modes, const std::vector<std::vector<double>>& g);

// Closed-form D_ab(t,s) for the untruncated bosonic bath.
cplx bosonic_correlation(const std::vector<BosonicMode>& modes, const std::vector<std::vector<double>>& g, int a, int b,
                         double t, double s);

struct BathCorrelation {
  Vec mean;  // <phi_a(t_i)>, index a*nodes + i
  Mat D;     // connected <phi_a(t_i) phi_b(t_j)>
};

// Environment operators transported on the grid, with moments of ordered superoperator strings.
class QuantumEnvironment {
 public:
  QuantumEnvironment(EnvironmentSpec env, const TimeGrid& grid);

  const EnvironmentSpec& spec() const { return env_; }
  int labels() const { return env_.labels(); }
  int nodes() const { return static_cast<int>(ops_.f.size()); }
  const Mat& op(int a, int i) const { return ops_.f[i][a]; }

  BathCorrelation correlation() const;
  // <T prod phi^{s_p}_{a_p}(t_p)/2>; entries listed latest first
  cplx moment(const std::vector<int>& signs, const std::vector<int>& labels, const std::vector<int>& nodes) const;

 private:
  EnvironmentSpec env_;
  FamilyOnGrid ops_;
};

// Quantum cumulants through the Ursell formula on exact environment moments.
std::unique_ptr<CumulantSource> environment_cumulants(std::shared_ptr<const QuantumEnvironment> env, int max_order);
// Gaussian truncation built from the environment two-point function.
QuantumGaussianCumulants gaussian_environment_cumulants(const QuantumEnvironment& env);

}  // namespace stochmap
