#include "stochmap/core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <iostream>

namespace stochmap {

TimeGrid::TimeGrid(double t_max, int n_steps) : t_max_(t_max), n_steps_(n_steps) {
  if (!(t_max > 0.0) || n_steps < 1) throw std::invalid_argument("TimeGrid: need t_max > 0 and n_steps >= 1");
  dt_ = t_max / n_steps;
}

double TimeGrid::weight(int i) const { return weight(i, n_steps_); }

double TimeGrid::weight(int j, int upto) const {
  if (j < 0 || j > upto || upto == 0) return 0.0;
  return (j == 0 || j == upto) ? 0.5 * dt_ : dt_;
}

double hermiticity_defect(const Mat& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

Mat hermitize(const Mat& m, const std::string& what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(what + ": not square");
  double defect = hermiticity_defect(m);
  if (defect > 1e-12) std::cerr << "warning: " << what << " asymmetry " << defect << ", symmetrized\n";
  return 0.5 * (m + m.adjoint());
}

OperatorFamily::OperatorFamily(Mat h0, std::vector<Mat> ops, std::vector<std::string> labels)
    : h0_(hermitize(h0, "H0")), labels_(std::move(labels)) {
  for (std::size_t a = 0; a < ops.size(); ++a) {
    if (ops[a].rows() != h0_.rows() || ops[a].cols() != h0_.cols())
      throw std::invalid_argument("OperatorFamily: operator dimension differs from H0");
    ops_.push_back(hermitize(ops[a], "coupling operator"));
  }
  if (labels_.empty())
    for (std::size_t a = 0; a < ops_.size(); ++a) labels_.push_back(std::to_string(a));
  if (labels_.size() != ops_.size()) throw std::invalid_argument("OperatorFamily: label count mismatch");
  Eigen::SelfAdjointEigenSolver<Mat> es(h0_);
  evals_ = es.eigenvalues();
  evecs_ = es.eigenvectors();
}

int OperatorFamily::label_index(const std::string& label) const {
  for (std::size_t a = 0; a < labels_.size(); ++a)
    if (labels_[a] == label) return static_cast<int>(a);
  throw std::out_of_range("unknown operator label '" + label + "'");
}

Mat OperatorFamily::free_propagator(double t) const {
  Vec phases(evals_.size());
  for (int k = 0; k < evals_.size(); ++k) phases(k) = std::exp(-kI * evals_(k) * t);
  return evecs_ * phases.asDiagonal() * evecs_.adjoint();
}

Mat OperatorFamily::interaction(int a, double t) const {
  if (a < 0 || a >= size()) throw std::out_of_range("unknown operator label index");
  Mat u = free_propagator(t);
  return hermitize(u.adjoint() * ops_[a] * u, "interaction-picture operator");
}

Mat OperatorFamily::interaction(const std::string& label, double t) const {
  return interaction(label_index(label), t);
}

OperatorFamily OperatorFamily::scaled(double lambda) const {
  std::vector<Mat> ops;
  for (const auto& f : ops_) ops.push_back(lambda * f);
  return OperatorFamily(h0_, ops, labels_);
}

FamilyOnGrid::FamilyOnGrid(const OperatorFamily& family, const TimeGrid& grid)
    : dim(family.dim()), labels(family.size()) {
  f.resize(grid.nodes());
  for (int i = 0; i < grid.nodes(); ++i) {
    Mat u = family.free_propagator(grid.time(i));
    for (int a = 0; a < labels; ++a) {
      Mat m = u.adjoint() * family.op(a) * u;
      f[i].push_back(0.5 * (m + m.adjoint()));
    }
  }
}

Mat apply_superop(Superop tag, const Mat& f, const Mat& rho) {
  if (f.rows() != rho.rows() || f.cols() != rho.cols()) throw std::invalid_argument("apply_superop: dimension mismatch");
  switch (tag) {
    case Superop::Left: return f * rho;
    case Superop::Right: return rho * f;
    case Superop::Plus: return f * rho + rho * f;
    case Superop::Minus: return f * rho - rho * f;
  }
  return {};
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Mat superop_matrix(Superop tag, const Mat& f) {
  const int d = static_cast<int>(f.rows());
  Mat id = Mat::Identity(d, d);
  Mat left = kron(f, id);
  Mat right = kron(id, f.transpose());
  switch (tag) {
    case Superop::Left: return left;
    case Superop::Right: return right;
    case Superop::Plus: return left + right;
    case Superop::Minus: return left - right;
  }
  return {};
}

Vec vec_rowmajor(const Mat& rho) {
  const int d = static_cast<int>(rho.rows());
  Vec v(d * rho.cols());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < rho.cols(); ++j) v(i * rho.cols() + j) = rho(i, j);
  return v;
}

Mat unvec_rowmajor(const Vec& v, int d) {
  Mat rho(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) rho(i, j) = v(i * d + j);
  return rho;
}

Mat apply_map(const Mat& superop, const Mat& rho) {
  return unvec_rowmajor(superop * vec_rowmajor(rho), static_cast<int>(rho.rows()));
}

Mat choi_of(const LinearMap& map, int d) {
  Mat choi = Mat::Zero(d * d, d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Mat e = Mat::Zero(d, d);
      e(i, j) = 1.0;
      choi.block(i * d, j * d, d, d) = map(e);
    }
  return choi;
}

Mat choi_of_superop(const Mat& superop) {
  const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(superop.rows()))));
  return choi_of([&](const Mat& x) { return apply_map(superop, x); }, d);
}

CptpReport cptp_report(const Mat& choi, const LinearMap& map, int d) {
  CptpReport r;
  Mat h = 0.5 * (choi + choi.adjoint());
  r.min_eig = Eigen::SelfAdjointEigenSolver<Mat>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Mat e = Mat::Zero(d, d);
      e(i, j) = 1.0;
      double dev = std::abs(map(e).trace() - (i == j ? 1.0 : 0.0));
      r.max_trace_deviation = std::max(r.max_trace_deviation, dev);
    }
  return r;
}

CptpReport cptp_report(const Mat& superop) {
  const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(superop.rows()))));
  return cptp_report(choi_of_superop(superop), [&](const Mat& x) { return apply_map(superop, x); }, d);
}

double trace_deviation(const Mat& superop) {
  const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(superop.rows()))));
  double worst = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      cplx tr = 0.0;
      for (int k = 0; k < d; ++k) tr += superop(k * d + k, i * d + j);
      worst = std::max(worst, std::abs(tr - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

Mat expm(const Mat& a) { return a.exp(); }

Mat commutator(const Mat& a, const Mat& b) { return a * b - b * a; }
Mat anticommutator(const Mat& a, const Mat& b) { return a * b + b * a; }

double trace_distance(const Mat& rho, const Mat& sigma) {
  Mat diff = rho - sigma;
  Mat h = 0.5 * (diff + diff.adjoint());
  auto ev = Eigen::SelfAdjointEigenSolver<Mat>(h, Eigen::EigenvaluesOnly).eigenvalues();
  return 0.5 * ev.cwiseAbs().sum();
}

Mat partial_trace_env(const Mat& rho, int d_sys, int d_env) {
  Mat out = Mat::Zero(d_sys, d_sys);
  for (int i = 0; i < d_sys; ++i)
    for (int j = 0; j < d_sys; ++j) {
      cplx s = 0.0;
      for (int e = 0; e < d_env; ++e) s += rho(i * d_env + e, j * d_env + e);
      out(i, j) = s;
    }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Mat pauli_x() {
  Mat m = Mat::Zero(2, 2);
  m(0, 1) = m(1, 0) = 1.0;
  return m;
}

Mat pauli_y() {
  Mat m = Mat::Zero(2, 2);
  m(0, 1) = -kI;
  m(1, 0) = kI;
  return m;
}

Mat pauli_z() {
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

Mat annihilation(int levels) {
  Mat a = Mat::Zero(levels, levels);
  for (int n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

}  // namespace stochmap
