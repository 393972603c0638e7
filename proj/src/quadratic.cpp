#include "stochmap/quadratic.hpp"

#include "stochmap/csv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stochmap {

ContractionKernel::ContractionKernel(int labels, int nodes, Mat commutators)
    : labels_(labels), nodes_(nodes), raw_(std::move(commutators)) {
  if (raw_.rows() != labels * nodes || raw_.cols() != labels * nodes)
    throw std::invalid_argument("ContractionKernel: table size does not match labels x nodes");
}

ContractionKernel ContractionKernel::negated() const {
  ContractionKernel c(labels_, nodes_, -raw_);
  c.max_deviation = max_deviation;
  return c;
}

ContractionKernel wick_contractions(const FamilyOnGrid& family, int boundary, double tol) {
  const int L = family.labels, n = static_cast<int>(family.f.size()), d = family.dim;
  const int m = d - boundary;
  if (m < 2) throw std::invalid_argument("wick_contractions: boundary mask leaves fewer than two levels to check");
  Mat raw = Mat::Zero(L * n, L * n);
  double worst = 0.0;
  for (int b = 0; b < L; ++b)
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < L; ++a)
        for (int j = i; j < n; ++j) {
          const Mat& x = family.at(i, b);
          const Mat& y = family.at(j, a);
          Mat comm = x * y - y * x;
          cplx c = comm(0, 0);
          Mat block = comm.topLeftCorner(m, m);
          block.diagonal().array() -= c;
          double dev = block.cwiseAbs().maxCoeff();
          if (dev > tol) {
            std::ostringstream msg;
            msg << "commutator [f_" << b << "(t_" << i << "), f_" << a << "(t_" << j << ")] is not a c-number (deviation "
                << dev << " > " << tol << ")";
            throw NotCNumber(msg.str());
          }
          worst = std::max(worst, dev);
          raw(b * n + i, a * n + j) = c;
          raw(a * n + j, b * n + i) = -c;
        }
  ContractionKernel out(L, n, raw);
  out.max_deviation = worst;
  return out;
}

KernelSeries kernel_recursion(const DriftKernel& K, const ContractionKernel& c, const TimeGrid& grid, int n_max, double eps) {
  const int n = grid.nodes(), L = K.labels();
  if (K.nodes() != n || c.nodes() != n || c.labels() != L) throw std::invalid_argument("kernel_recursion: shape mismatch");
  if (n_max < 1) throw std::invalid_argument("kernel_recursion: n_max must be at least 1");
  const double dt = grid.dt();
  const int M = L * n;

  KernelSeries s;
  s.labels = L;
  s.nodes = n;
  Mat k1 = Mat::Zero(M, M);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) k1(a * n + i, b * n + j) = K(a, b, i, j);
  s.orders.push_back(k1);
  s.sup_norms.push_back(k1.cwiseAbs().maxCoeff());
  s.total = k1;
  if (eps <= 0.0) eps = 1e-8 * s.sup_norms[0];

  Mat kbar(M, M);
  for (int al = 0; al < L; ++al)
    for (int g = 0; g < L; ++g)
      for (int v = 0; v < n; ++v)
        for (int u = 0; u < n; ++u) kbar(al * n + v, g * n + u) = K(al, g, v, u) + K(g, al, u, v);

  int rising = 0;
  if (s.sup_norms[0] == 0.0) {
    s.converged = true;
    return s;
  }
  for (int order = 2; order <= n_max; ++order) {
    const Mat& prev = s.orders.back();
    Mat next = Mat::Zero(M, M);
    Mat P(L, L * n);
    for (int i = 0; i < n; ++i) {
      // P(a, alpha; v) = sum_beta sum_{s <= v} dt prev(a, beta; i, s) dt c^{beta alpha}(s, v)
      P.setZero();
      for (int a = 0; a < L; ++a)
        for (int be = 0; be < L; ++be)
          for (int sn = 0; sn <= i; ++sn) {
            cplx kv = prev(a * n + i, be * n + sn);
            if (kv == 0.0) continue;
            for (int al = 0; al < L; ++al)
              for (int v = sn; v <= i; ++v) P(a, al * n + v) += dt * dt * kv * c(be, al, sn, v);
          }
      for (int a = 0; a < L; ++a)
        for (int g = 0; g < L; ++g)
          for (int u = 0; u <= i; ++u) {
            cplx acc = 0.0;
            for (int al = 0; al < L; ++al)
              for (int v = 0; v <= i; ++v) acc += P(a, al * n + v) * kbar(al * n + v, g * n + u);
            next(a * n + i, g * n + u) = u == i ? 0.5 * acc : acc;
          }
    }
    double sup = next.cwiseAbs().maxCoeff();
    rising = sup >= s.sup_norms.back() ? rising + 1 : 0;
    s.orders.push_back(next);
    s.sup_norms.push_back(sup);
    s.total += next;
    if (rising >= 3) {
      std::ostringstream msg;
      msg << "kernel series does not converge: sup|K^(n)| grew for 3 consecutive orders (n = " << order << ", sup = " << sup
          << ")";
      throw NonConvergent(msg.str());
    }
    if (sup < eps) {
      s.converged = true;
      break;
    }
  }
  return s;
}

void write_kernel_series_csv(const std::string& path, const KernelSeries& series) {
  CsvWriter w(path);
  w.header({"order", "i", "j", "alpha", "beta", "Re", "Im"});
  const int n = series.nodes;
  for (std::size_t o = 0; o < series.orders.size(); ++o)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        for (int a = 0; a < series.labels; ++a)
          for (int b = 0; b < series.labels; ++b) {
            w.cell(static_cast<int>(o + 1)).cell(i).cell(j).cell(a).cell(b).cell(series.orders[o](a * n + i, b * n + j));
            w.end_row();
          }
}

TimeLocalPropagator::TimeLocalPropagator(const KernelSeries& series, const ContractionKernel& c, const FamilyOnGrid& family,
                                         const TimeGrid& grid)
    : n_(grid.nodes()), L_(family.labels), d_(family.dim), dt_(grid.dt()), family_(family) {
  if (series.nodes != n_ || series.labels != L_ || c.nodes() != n_ || c.labels() != L_)
    throw std::invalid_argument("time-local generator: shape mismatch");
  memory_.assign(n_, Mat::Zero(d_, d_));
  q_.assign(n_, {});
  for (int i = 0; i < n_; ++i) {
    for (int a = 0; a < L_; ++a)
      for (int b = 0; b < L_; ++b)
        for (int s = 0; s <= i; ++s) {
          cplx kv = series(a, b, i, s);
          if (kv != 0.0) memory_[i] += dt_ * kv * family.at(i, a) * family.at(s, b);
        }
    // Q_{a alpha}(i, v) = sum_beta sum_{s <= v} dt KK(i, s) dt c^{beta alpha}(s, v)
    q_[i].assign(static_cast<std::size_t>(L_) * L_ * (i + 1), 0.0);
    for (int a = 0; a < L_; ++a)
      for (int be = 0; be < L_; ++be)
        for (int s = 0; s <= i; ++s) {
          cplx kv = series(a, be, i, s);
          if (kv == 0.0) continue;
          for (int al = 0; al < L_; ++al)
            for (int v = s; v <= i; ++v) q_[i][(a * L_ + al) * (i + 1) + v] += dt_ * dt_ * kv * c(be, al, s, v);
        }
  }
}

Mat TimeLocalPropagator::generator(int node, const NoisePath& path) const {
  if (path.labels != L_ || path.nodes != n_) throw std::invalid_argument("time-local generator: noise path shape mismatch");
  Mat g = -memory_[node];
  for (int a = 0; a < L_; ++a) {
    cplx z = path(a, node);
    for (int al = 0; al < L_; ++al)
      for (int v = 0; v <= node; ++v) z += q_[node][(a * L_ + al) * (node + 1) + v] * path(al, v);
    g -= kI * z * family_.at(node, a);
  }
  return g;
}

TrajectoryState TimeLocalPropagator::evolve(const NoisePath& path, const Mat& psi0) const {
  if (psi0.rows() != d_) throw std::invalid_argument("evolve_timelocal: initial state dimension mismatch");
  TrajectoryState out;
  out.dim = d_;
  out.cols = static_cast<int>(psi0.cols());
  Mat psi = psi0;
  for (int i = 0; i < n_; ++i) {
    out.psi.push_back(psi);
    if (i + 1 < n_) psi = expm(dt_ * generator(i, path)) * psi;
  }
  return out;
}

Mat timelocal_generator(int node, const KernelSeries& series, const ContractionKernel& c, const NoisePath& path,
                        const FamilyOnGrid& family, const TimeGrid& grid) {
  return TimeLocalPropagator(series, c, family, grid).generator(node, path);
}

TrajectoryState evolve_timelocal(const NoisePath& path, const KernelSeries& series, const ContractionKernel& c,
                                 const FamilyOnGrid& family, const TimeGrid& grid, const Mat& psi0) {
  return TimeLocalPropagator(series, c, family, grid).evolve(path, psi0);
}

double fidelity(const Mat& a, const Mat& b) {
  cplx overlap = (a.adjoint() * b)(0, 0);
  return std::norm(overlap) / (a.squaredNorm() * b.squaredNorm());
}

}  // namespace stochmap
