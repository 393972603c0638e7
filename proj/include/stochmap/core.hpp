#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochmap {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

// Uniform grid on [0, t_max]; node i sits at i*dt.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t_max, int n_steps);

  double t_max() const { return t_max_; }
  int n_steps() const { return n_steps_; }
  int nodes() const { return n_steps_ + 1; }
  double dt() const { return dt_; }
  double time(int i) const { return i * dt_; }
  // trapezoid weight of node i
  double weight(int i) const;
  // trapezoid weight of node j for an integral over [0, time(upto)]
  double weight(int j, int upto) const;

 private:
  double t_max_ = 1.0;
  int n_steps_ = 1;
  double dt_ = 1.0;
};

// Symmetrizes to (M + M†)/2. Asymmetry above 1e-12 is reported on stderr.
Mat hermitize(const Mat& m, const std::string& what = "operator");
double hermiticity_defect(const Mat& m);

class OperatorFamily {
 public:
  OperatorFamily() = default;
  OperatorFamily(Mat h0, std::vector<Mat> ops, std::vector<std::string> labels = {});

  int dim() const { return static_cast<int>(h0_.rows()); }
  int size() const { return static_cast<int>(ops_.size()); }
  const Mat& h0() const { return h0_; }
  const Mat& op(int a) const { return ops_.at(a); }
  const std::vector<std::string>& labels() const { return labels_; }
  int label_index(const std::string& label) const;

  // e^{i H0 t} f_a e^{-i H0 t}
  Mat interaction(int a, double t) const;
  Mat interaction(const std::string& label, double t) const;
  // e^{-i H0 t}
  Mat free_propagator(double t) const;

  OperatorFamily scaled(double lambda) const;

 private:
  Mat h0_;
  std::vector<Mat> ops_;
  std::vector<std::string> labels_;
  Eigen::VectorXd evals_;
  Mat evecs_;
};

// f_a(tau_i) for all nodes, indexed [node][label].
struct FamilyOnGrid {
  int dim = 0;
  int labels = 0;
  std::vector<std::vector<Mat>> f;

  FamilyOnGrid() = default;
  FamilyOnGrid(const OperatorFamily& family, const TimeGrid& grid);
  const Mat& at(int node, int a) const { return f[node][a]; }
};

enum class Superop { Left, Right, Plus, Minus };

Mat apply_superop(Superop tag, const Mat& f, const Mat& rho);

// Superoperators act on row-major vec(rho): vec(rho)[i*d + j] = rho(i,j).
Mat superop_matrix(Superop tag, const Mat& f);
Vec vec_rowmajor(const Mat& rho);
Mat unvec_rowmajor(const Vec& v, int d);
Mat apply_map(const Mat& superop, const Mat& rho);

using LinearMap = std::function<Mat(const Mat&)>;

// C = sum_ij E_ij ⊗ map(E_ij)
Mat choi_of(const LinearMap& map, int d);
Mat choi_of_superop(const Mat& superop);

struct CptpReport {
  double min_eig = 0.0;
  double max_trace_deviation = 0.0;
  bool cp(double tol) const { return min_eig >= -tol; }
  bool tp(double tol) const { return max_trace_deviation <= tol; }
};

CptpReport cptp_report(const Mat& choi, const LinearMap& map, int d);
CptpReport cptp_report(const Mat& superop);
// max over matrix units of |tr(map(E_ij)) - delta_ij|
double trace_deviation(const Mat& superop);

Mat expm(const Mat& a);
Mat commutator(const Mat& a, const Mat& b);
Mat anticommutator(const Mat& a, const Mat& b);
double trace_distance(const Mat& rho, const Mat& sigma);
Mat kron(const Mat& a, const Mat& b);
Mat partial_trace_env(const Mat& rho, int d_sys, int d_env);

// least-squares slope of log y against log x
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

Mat pauli_x();
Mat pauli_y();
Mat pauli_z();
Mat annihilation(int levels);

}  // namespace stochmap
