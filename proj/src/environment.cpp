#include "stochmap/environment.hpp"

#include <cmath>
#include <stdexcept>

namespace stochmap {

void EnvironmentSpec::validate() const {
  const int d = dim();
  if (d < 1 || h_env.cols() != d) throw std::invalid_argument("environment: H_E must be square and non-empty");
  if (d > 512) throw std::invalid_argument("environment: dimension " + std::to_string(d) + " exceeds 512");
  if (hermiticity_defect(h_env) > 1e-12) throw std::invalid_argument("environment: H_E not Hermitian");
  for (const auto& c : couplings) {
    if (c.rows() != d || c.cols() != d) throw std::invalid_argument("environment: coupling dimension mismatch");
    if (hermiticity_defect(c) > 1e-12) throw std::invalid_argument("environment: coupling not Hermitian");
  }
  if (rho_env.rows() != d || rho_env.cols() != d) throw std::invalid_argument("environment: state dimension mismatch");
  if (std::abs(rho_env.trace() - 1.0) > 1e-10) throw std::invalid_argument("environment: state trace differs from 1");
  if (hermiticity_defect(rho_env) > 1e-12) throw std::invalid_argument("environment: state not Hermitian");
  double min_eig = Eigen::SelfAdjointEigenSolver<Mat>(rho_env, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (min_eig < -1e-10) throw std::invalid_argument("environment: state not positive");
}

EnvironmentSpec bosonic_environment(const std::vector<BosonicMode>& modes, const std::vector<std::vector<double>>& g) {
  EnvironmentSpec env;
  int total = 1;
  for (const auto& m : modes) {
    env.mode_dims.push_back(m.levels);
    total *= m.levels;
  }
  if (total > 512) throw std::invalid_argument("environment: dimension " + std::to_string(total) + " exceeds 512");
  auto embed = [&](std::size_t k, const Mat& op) {
    Mat out = Mat::Identity(1, 1);
    for (std::size_t j = 0; j < modes.size(); ++j)
      out = kron(out, j == k ? op : Mat(Mat::Identity(modes[j].levels, modes[j].levels)));
    return out;
  };
  env.h_env = Mat::Zero(total, total);
  std::vector<Mat> x;
  env.rho_env = Mat::Identity(1, 1);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    Mat a = annihilation(modes[k].levels);
    env.h_env += modes[k].frequency * embed(k, a.adjoint() * a);
    x.push_back(embed(k, (a + a.adjoint()) / std::sqrt(2.0)));
    Mat rho = Mat::Zero(modes[k].levels, modes[k].levels);
    if (modes[k].temperature <= 0.0) {
      rho(0, 0) = 1.0;
    } else {
      for (int n = 0; n < modes[k].levels; ++n) rho(n, n) = std::exp(-modes[k].frequency * n / modes[k].temperature);
      rho /= rho.trace();
    }
    env.rho_env = kron(env.rho_env, rho);
  }
  for (const auto& row : g) {
    if (row.size() != modes.size()) throw std::invalid_argument("environment: coupling row length differs from mode count");
    Mat phi = Mat::Zero(total, total);
    for (std::size_t k = 0; k < modes.size(); ++k) phi += row[k] * x[k];
    env.couplings.push_back(phi);
  }
  return env;
}

cplx bosonic_correlation(const std::vector<BosonicMode>& modes, const std::vector<std::vector<double>>& g, int a, int b,
                         double t, double s) {
  cplx total = 0.0;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const double w = modes[k].frequency;
    const double n = modes[k].temperature > 0.0 ? 1.0 / std::expm1(w / modes[k].temperature) : 0.0;
    total += 0.5 * g[a][k] * g[b][k] * ((n + 1.0) * std::exp(-kI * w * (t - s)) + n * std::exp(kI * w * (t - s)));
  }
  return total;
}

QuantumEnvironment::QuantumEnvironment(EnvironmentSpec env, const TimeGrid& grid) : env_(std::move(env)) {
  env_.validate();
  ops_ = FamilyOnGrid(OperatorFamily(env_.h_env, env_.couplings), grid);
}

BathCorrelation QuantumEnvironment::correlation() const {
  const int L = labels(), n = nodes();
  BathCorrelation c;
  c.mean = Vec::Zero(L * n);
  c.D = Mat::Zero(L * n, L * n);
  std::vector<Mat> op_rho(L * n);
  for (int a = 0; a < L; ++a)
    for (int i = 0; i < n; ++i) {
      op_rho[a * n + i] = op(a, i) * env_.rho_env;
      c.mean(a * n + i) = op_rho[a * n + i].trace();
    }
  for (int a = 0; a < L; ++a)
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < L; ++b)
        for (int j = 0; j < n; ++j) {
          // tr[phi_a(t_i) phi_b(t_j) rho]
          cplx v = op(a, i).transpose().cwiseProduct(op_rho[b * n + j]).sum();
          c.D(a * n + i, b * n + j) = v - c.mean(a * n + i) * c.mean(b * n + j);
        }
  return c;
}

cplx QuantumEnvironment::moment(const std::vector<int>& signs, const std::vector<int>& labels,
                                const std::vector<int>& nodes) const {
  Mat x = env_.rho_env;
  for (int p = static_cast<int>(signs.size()) - 1; p >= 0; --p)
    x = 0.5 * apply_superop(signs[p] > 0 ? Superop::Plus : Superop::Minus, op(labels[p], nodes[p]), x);
  return x.trace();
}

std::unique_ptr<CumulantSource> environment_cumulants(std::shared_ptr<const QuantumEnvironment> env, int max_order) {
  const int labels = env->labels();
  return std::make_unique<MomentCumulants>(
      Provenance::Quantum, labels, max_order,
      [env](const std::vector<int>& s, const std::vector<int>& a, const std::vector<int>& n) { return env->moment(s, a, n); });
}

QuantumGaussianCumulants gaussian_environment_cumulants(const QuantumEnvironment& env) {
  BathCorrelation c = env.correlation();
  return QuantumGaussianCumulants(env.labels(), env.nodes(), c.mean, c.D);
}

}  // namespace stochmap
