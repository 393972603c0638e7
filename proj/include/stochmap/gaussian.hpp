#pragma once

#include "stochmap/core.hpp"
#include "stochmap/environment.hpp"
#include "stochmap/noise.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stochmap {

struct XiOptions {
  // Open-insertion depth of the time-ordering hierarchy. 0 is the plain slice exponential
  // exp(-i dt f [phi - i sum_j dt K f_j]). Depth L resolves the ordering of up to L open pairs exactly;
  // the remaining error is order 2L+2 in the coupling plus same-slice terms that vanish with dt.
  int depth = 1;
  bool record_memory = false;  // store sum_x f K Phi_x at each node (exact left derivative)
  double taylor_tol = 1e-16;
  int max_taylor_terms = 80;
};

struct TrajectoryState {
  int dim = 0;
  int cols = 0;
  std::vector<Mat> psi;     // per node, dim x cols
  std::vector<Mat> memory;  // per node when recorded: i d/dt Xi - f phi Xi = -i memory
};

// Precomputes the noise-independent slice data once; evolve() is safe to call concurrently.
class XiPropagator {
 public:
  XiPropagator(const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid, const XiOptions& opts = {});
  TrajectoryState evolve(const NoisePath& path, const Mat& psi0) const;

 private:
  struct Plan;
  XiOptions opts_;
  std::shared_ptr<const Plan> plan_;
};

// Linear stochastic map Xi applied to the columns of psi0 along one noise path.
TrajectoryState evolve_xi(const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                          const Mat& psi0, const XiOptions& opts = {});

// phi - C^-: removes the imaginary part of the mean so the path enters Xi with the shift absorbed.
NoisePath absorb_mean_shift(const NoisePath& path, const NoiseModel& model);

struct TrajectorySample {
  std::vector<Mat> observables;  // per node
  double drift = 0.0;            // max per-node |norm^2 - 1| (or its map analogue)
};

// Per-node averages with a grouped jackknife over contiguous index blocks. The reduction order
// depends only on (count, groups), so results are identical for any thread count.
struct EnsembleAverage {
  int count = 0;
  std::vector<int> group_sizes;
  std::vector<std::vector<Mat>> group_mean;  // [group][node]
  std::vector<Mat> mean;                     // [node]
  double max_drift = 0.0;

  int nodes() const { return static_cast<int>(mean.size()); }
  double stderr_of(int node, const std::function<cplx(const Mat&)>& functional) const;
  Eigen::MatrixXd entry_stderr(int node) const;
};

EnsembleAverage ensemble_average(int count, int threads, int groups, const std::function<TrajectorySample(int)>& trajectory);

struct EnsembleOptions {
  int n_traj = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  int groups = 20;
  XiOptions xi;
};

// rho-bar(t) = <Xi psi0 psi0^dag Xi^dag>
EnsembleAverage density_ensemble(const NoiseModel& noise, const DriftKernel& K, const FamilyOnGrid& family,
                                 const TimeGrid& grid, const Vec& psi0, const EnsembleOptions& opts);
// averaged superoperator <Xi (x) conj(Xi)> per node
EnsembleAverage map_ensemble(const NoiseModel& noise, const DriftKernel& K, const FamilyOnGrid& family,
                             const TimeGrid& grid, const EnsembleOptions& opts);

struct TraceReport {
  std::vector<double> defect;  // per node |tr rho-bar - 1| or max over matrix units for maps
  std::vector<double> stderr_;
  double max_defect = 0.0;
  double max_ratio = 0.0;  // max defect / stderr over nodes with stderr > 0
  bool within(double sigmas, double floor = 1e-12) const;
};
TraceReport density_trace_report(const EnsembleAverage& rho);
TraceReport map_trace_report(const EnsembleAverage& maps, int dim);

enum class BathSplit { Circular, RealSymmetric, Scaled };
BathSplit parse_bath_split(const std::string& name);

struct MatchedNoise {
  NoiseModel model;
  DriftKernel kernel;
};

// Noise with <phi* phi> = D and <phi phi> fixed by the split; throws NonPositiveCovariance if unphysical.
MatchedNoise match_bath(const BathCorrelation& bath, const TimeGrid& grid, int labels, BathSplit split = BathSplit::Circular,
                        double scale = 0.5);

// CSV rows node, i, j, Re, Im, stderr
void write_ensemble_csv(const std::string& path, const EnsembleAverage& avg);

}  // namespace stochmap
