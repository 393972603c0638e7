#pragma once

#include "stochmap/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stochmap {

struct NonPositiveCovariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Counter-based generator: the stream for (master_seed, index) is independent of evaluation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t master_seed, std::uint64_t index);
  std::uint64_t next();
  double uniform();  // in (0, 1]
  double normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct KernelSpec {
  enum class Type { Zero, White, Exponential, Tabulated };
  Type type = Type::Zero;
  cplx amplitude = 0.0;
  double correlation_time = 1.0;
  double frequency = 0.0;  // optional oscillation e^{-i w (t-s)} on the exponential form
  std::string file;        // tabulated: CSV (i, j, alpha, beta, Re, Im)
};

// Kernels are given for label pairs (a, b) with a <= b; the partner entries follow from
// Hermiticity of A and symmetry of S.
struct NoiseSpec {
  int labels = 1;
  std::vector<cplx> mean;  // constant mean per label
  std::map<std::pair<int, int>, KernelSpec> covariance;         // A
  std::map<std::pair<int, int>, KernelSpec> pseudo_covariance;  // S
};

struct NoisePath {
  int labels = 0;
  int nodes = 0;
  std::vector<cplx> phi;  // [a * nodes + i]
  std::uint64_t master_seed = 0;
  std::uint64_t index = 0;

  cplx operator()(int a, int i) const { return phi[static_cast<std::size_t>(a) * nodes + i]; }
  cplx& operator()(int a, int i) { return phi[static_cast<std::size_t>(a) * nodes + i]; }
  NoisePath scaled(double lambda) const;
};

class NoiseModel {
 public:
  NoiseModel() = default;
  // S, A are (labels*nodes)^2 blocks indexed a*nodes + i.
  NoiseModel(TimeGrid grid, int labels, Vec mean, Mat pseudo_covariance, Mat covariance);

  const TimeGrid& grid() const { return grid_; }
  int labels() const { return labels_; }
  int nodes() const { return grid_.nodes(); }
  int index(int a, int i) const { return a * nodes() + i; }
  const Vec& mean() const { return mean_; }
  const Mat& S() const { return S_; }
  const Mat& A() const { return A_; }
  bool real_valued() const { return real_only_; }
  double min_embedding_eigenvalue() const { return min_eig_; }
  int rank() const { return static_cast<int>(factor_.cols()); }

  NoisePath sample(std::uint64_t master_seed, std::uint64_t index) const;

 private:
  void factorize();

  TimeGrid grid_;
  int labels_ = 0;
  Vec mean_;
  Mat S_, A_;
  Eigen::MatrixXd factor_;  // 2M x r, or M x r for real-valued models
  bool real_only_ = false;
  double min_eig_ = 0.0;
};

NoiseModel build_noise(const NoiseSpec& spec, const TimeGrid& grid);
NoisePath sample(const NoiseModel& model, std::uint64_t master_seed, std::uint64_t index);
std::vector<NoisePath> sample_ensemble(const NoiseModel& model, std::uint64_t master_seed, int count, int threads = 1);

// K_ab(t_i, t_j) = (<phi_a*(t_i) phi_b(t_j)> - <phi_a(t_i) phi_b(t_j)>) theta(t_i - t_j), theta(0) = 1/2.
class DriftKernel {
 public:
  DriftKernel() = default;
  DriftKernel(int labels, int nodes, Mat values);
  static DriftKernel zero(int labels, int nodes);

  int labels() const { return labels_; }
  int nodes() const { return nodes_; }
  // stored value including the diagonal half-weight; zero for i < j
  cplx operator()(int a, int b, int i, int j) const {
    return i < j ? cplx(0.0) : values_(a * nodes_ + i, b * nodes_ + j);
  }
  // kernel without the coincident-time half-weight
  cplx raw(int a, int b, int i, int j) const { return i == j ? 2.0 * (*this)(a, b, i, j) : (*this)(a, b, i, j); }
  const Mat& values() const { return values_; }
  DriftKernel scaled(double lambda) const;
  bool is_zero() const { return values_.size() == 0 || values_.cwiseAbs().maxCoeff() == 0.0; }

 private:
  int labels_ = 0;
  int nodes_ = 0;
  Mat values_;
};

DriftKernel drift_kernel(const NoiseModel& model);

// Linear combination a*phi + b*phi* of one label at one node.
struct NoiseFactor {
  int label = 0;
  int node = 0;
  cplx a = 1.0;
  cplx b = 0.0;
  cplx value(const NoisePath& p) const { return a * p(label, node) + b * std::conj(p(label, node)); }
};

struct Estimate {
  cplx value = 0.0;
  double stderr_ = 0.0;
};

struct SecondOrderEstimates {
  int labels = 0;
  int nodes = 0;
  int paths = 0;
  Vec mean;
  Eigen::VectorXd mean_se;
  Mat S, A;  // unbiased (N - 1) normalization
  Eigen::MatrixXd S_se, A_se;
};

SecondOrderEstimates empirical_second_order(const std::vector<NoisePath>& paths);
// Joint cumulant of up to four factors; orders 1-2 unbiased, 3-4 plug-in, errors by grouped jackknife.
Estimate empirical_cumulant(const std::vector<NoisePath>& paths, const std::vector<NoiseFactor>& factors);

// phi_a = sum_k w[a][k] (g_k^2 - <g_k^2>) with g a real Gaussian model.
class SquaredGaussianFamily {
 public:
  SquaredGaussianFamily(NoiseModel base, std::vector<std::vector<cplx>> weights);

  int labels() const { return static_cast<int>(weights_.size()); }
  const NoiseModel& base() const { return base_; }
  const std::vector<std::vector<cplx>>& weights() const { return weights_; }
  NoisePath sample(std::uint64_t master_seed, std::uint64_t index) const;
  // covariance of the underlying real process
  double base_cov(int k, int i, int l, int j) const { return base_.A()(base_.index(k, i), base_.index(l, j)).real(); }
  // joint cumulant of centered squares X = g^2 - <g^2> at the listed (base label, node) points
  double square_cumulant(const std::vector<std::pair<int, int>>& points) const;
  // joint moment of centered squares
  double square_moment(const std::vector<std::pair<int, int>>& points) const;

 private:
  NoiseModel base_;
  std::vector<std::vector<cplx>> weights_;
};

Mat read_kernel_csv(const std::string& file, int labels, int nodes);

}  // namespace stochmap
