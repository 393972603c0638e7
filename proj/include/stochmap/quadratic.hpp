#pragma once

#include "stochmap/core.hpp"
#include "stochmap/gaussian.hpp"
#include "stochmap/noise.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochmap {

struct NotCNumber : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonConvergent : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// c^{ba}(t_i, t_j) = [f_b(t_i), f_a(t_j)] theta(t_j - t_i), theta(0) = 1/2. This is the sign that
// appears when f_b(t_i) is moved out of a time-ordered product to the left.
class ContractionKernel {
 public:
  ContractionKernel() = default;
  ContractionKernel(int labels, int nodes, Mat commutators);

  int labels() const { return labels_; }
  int nodes() const { return nodes_; }
  // scalar commutator [f_b(t_i), f_a(t_j)] without the step function
  cplx commutator(int b, int a, int i, int j) const { return raw_(b * nodes_ + i, a * nodes_ + j); }
  cplx operator()(int b, int a, int i, int j) const {
    if (j < i) return 0.0;
    cplx c = commutator(b, a, i, j);
    return i == j ? 0.5 * c : c;
  }
  const Mat& raw() const { return raw_; }
  double max_deviation = 0.0;  // worst distance from a multiple of the identity on the interior block
  ContractionKernel negated() const;

 private:
  int labels_ = 0;
  int nodes_ = 0;
  Mat raw_;
};

// boundary: number of top Fock levels excluded from the c-number check (truncation artefacts).
ContractionKernel wick_contractions(const FamilyOnGrid& family, int boundary = 0, double tol = 1e-6);

struct KernelSeries {
  int labels = 0;
  int nodes = 0;
  std::vector<Mat> orders;  // K^(1..n), blocks a*nodes + i; stored with half weight at coincident times
  std::vector<double> sup_norms;
  Mat total;
  bool converged = false;

  cplx operator()(int a, int b, int i, int j) const { return j > i ? cplx(0.0) : total(a * nodes + i, b * nodes + j); }
};

// K^(n)(t, u) = int int K^(n-1)(t, s) c(s, v) Kbar(v, u), Kbar(v, u) = K(v, u) + K(u, v), all integrals on [0, t].
// eps <= 0 selects 1e-8 sup|K|.
KernelSeries kernel_recursion(const DriftKernel& K, const ContractionKernel& c, const TimeGrid& grid, int n_max,
                              double eps = 0.0);

void write_kernel_series_csv(const std::string& path, const KernelSeries& series);

// G(t_i) = -i f phi - f sum_s dt KK(t, s) [f(s) + i sum_v dt c(s, v) phi(v)]
class TimeLocalPropagator {
 public:
  TimeLocalPropagator(const KernelSeries& series, const ContractionKernel& c, const FamilyOnGrid& family,
                      const TimeGrid& grid);
  Mat generator(int node, const NoisePath& path) const;
  TrajectoryState evolve(const NoisePath& path, const Mat& psi0) const;

 private:
  int n_ = 0, L_ = 0, d_ = 0;
  double dt_ = 0.0;
  FamilyOnGrid family_;
  std::vector<Mat> memory_;               // [i]: dt sum_s KK(i, s) f(i) f(s)
  std::vector<std::vector<cplx>> q_;      // [i][(a * L + alpha) * (i + 1) + v]: sum_s dt KK(i, s) dt c(s, v)
};

Mat timelocal_generator(int node, const KernelSeries& series, const ContractionKernel& c, const NoisePath& path,
                        const FamilyOnGrid& family, const TimeGrid& grid);
TrajectoryState evolve_timelocal(const NoisePath& path, const KernelSeries& series, const ContractionKernel& c,
                                 const FamilyOnGrid& family, const TimeGrid& grid, const Mat& psi0);

// |<a|b>|^2 / (|a|^2 |b|^2) for single columns
double fidelity(const Mat& a, const Mat& b);

}  // namespace stochmap
