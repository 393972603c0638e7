#include "stochmap/expansion.hpp"

#include <array>
#include <stdexcept>

namespace stochmap {
namespace {

constexpr int kMaxLen = 5;

struct TupleSum {
  const NoisePath& path;
  const DriftKernel& K;
  const FamilyOnGrid& family;
  int len;
  int top;  // nodes strictly below top
  bool marked;
  std::array<int, kMaxLen> node{}, label{};
  std::vector<Mat> prefix;
  std::vector<Mat> acc;  // xi: acc[0]; d: acc[alpha]

  TupleSum(const NoisePath& p, const DriftKernel& k, const FamilyOnGrid& f, int n, int m, bool mark)
      : path(p), K(k), family(f), len(n), top(m), marked(mark) {
    prefix.assign(n + 1, Mat::Identity(f.dim, f.dim));
    acc.assign(mark ? f.labels : 1, Mat::Zero(f.dim, f.dim));
  }

  // sum over partial pairings of the positions in mask; pairs (p < q) carry K(t_p, t_q), singles phi
  cplx pairings(unsigned mask) const {
    if (mask == 0) return 1.0;
    int p = __builtin_ctz(mask);
    unsigned rest = mask & ~(1u << p);
    cplx s = path(label[p], node[p]) * pairings(rest);
    for (unsigned r = rest; r; r &= r - 1) {
      int q = __builtin_ctz(r);
      cplx k = K.raw(label[p], label[q], node[p], node[q]);
      if (k != 0.0) s += k * pairings(rest & ~(1u << q));
    }
    return s;
  }

  double tie_weight() const {
    double w = 1.0;
    int run = 1;
    for (int p = 1; p < len; ++p) {
      run = node[p] == node[p - 1] ? run + 1 : 1;
      w /= run;
    }
    return w;
  }

  void leaf() {
    const unsigned all = (1u << len) - 1;
    const double w = tie_weight();
    const Mat& P = prefix[len];
    if (!marked) {
      cplx s = w * pairings(all);
      if (s != 0.0) acc[0] += s * P;
      return;
    }
    for (int a = 0; a < family.labels; ++a) {
      cplx s = 0.0;
      for (int p = 0; p < len; ++p) {
        cplx k = K(a, label[p], top, node[p]);
        if (k != 0.0) s += k * pairings(all & ~(1u << p));
      }
      if (s != 0.0) acc[a] += (w * s) * P;
    }
  }

  void run(int pos, int upper) {
    if (pos == len) {
      leaf();
      return;
    }
    for (int j = 0; j <= upper; ++j)
      for (int b = 0; b < family.labels; ++b) {
        node[pos] = j;
        label[pos] = b;
        prefix[pos + 1].noalias() = prefix[pos] * family.at(j, b);
        run(pos + 1, j);
      }
  }
};

void check_shapes(int n, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                  int node) {
  if (n < 0 || n > kMaxLen) throw std::invalid_argument("expansion: order out of range (0..5)");
  if (node < 0 || node >= grid.nodes()) throw std::invalid_argument("expansion: node out of range");
  if (path.labels != family.labels || path.nodes != grid.nodes() || K.labels() != family.labels ||
      K.nodes() != grid.nodes() || static_cast<int>(family.f.size()) != grid.nodes())
    throw std::invalid_argument("expansion: shape mismatch");
}

}  // namespace

ExpansionTerm xi_term(int n, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                      int node) {
  check_shapes(n, path, K, family, grid, node);
  ExpansionTerm out{n, node, Mat::Identity(family.dim, family.dim)};
  if (n == 0) return out;
  if (node == 0) {
    out.value.setZero();
    return out;
  }
  TupleSum t(path, K, family, n, node, false);
  t.run(0, node - 1);
  out.value = std::pow(grid.dt(), n) * t.acc[0];
  return out;
}

ExpansionTerm d_term(int n, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                     int node) {
  check_shapes(n, path, K, family, grid, node);
  ExpansionTerm out{n + 1, node, Mat::Zero(family.dim, family.dim)};
  if (n == 0 || node == 0) return out;
  TupleSum t(path, K, family, n, node, true);
  t.run(0, node - 1);
  for (int a = 0; a < family.labels; ++a) out.value += family.at(node, a) * t.acc[a];
  out.value *= std::pow(grid.dt(), n);
  return out;
}

std::vector<Mat> inverse_terms(const std::vector<Mat>& xi) {
  if (xi.empty()) return {};
  std::vector<Mat> M(xi.size());
  M[0] = Mat::Identity(xi[0].rows(), xi[0].cols());
  for (std::size_t n = 1; n < xi.size(); ++n) {
    M[n] = Mat::Zero(xi[0].rows(), xi[0].cols());
    for (std::size_t k = 0; k < n; ++k) M[n] -= M[k] * xi[n - k];
  }
  return M;
}

std::vector<Mat> L_terms(const std::vector<Mat>& d, const std::vector<Mat>& xi) {
  if (d.size() != xi.size()) throw std::invalid_argument("L_terms: d and xi must have the same number of orders");
  const std::size_t N = d.size();
  if (N == 0) return {};
  const Mat zero = Mat::Zero(xi[0].rows(), xi[0].cols());
  std::vector<Mat> L(N, zero);
  for (std::size_t n = 2; n < N; ++n) {
    L[n] = d[n];
    for (std::size_t k = 1; k < n; ++k) L[n] -= L[k] * xi[n - k];
  }
  return L;
}

ExpansionSet expansion_terms(int N, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family,
                             const TimeGrid& grid, int node) {
  ExpansionSet s;
  for (int n = 0; n <= N; ++n) {
    s.xi.push_back(xi_term(n, path, K, family, grid, node).value);
    s.d.push_back(n < 2 ? Mat::Zero(family.dim, family.dim) : d_term(n - 1, path, K, family, grid, node).value);
  }
  return s;
}

Mat resum(const std::vector<Mat>& terms, int N) {
  Mat s = Mat::Zero(terms.at(0).rows(), terms.at(0).cols());
  cplx phase = 1.0;
  for (int n = 0; n <= N && n < static_cast<int>(terms.size()); ++n, phase *= -kI) s += phase * terms[n];
  return s;
}

Mat resum_generator(const std::vector<Mat>& L, int N) {
  Mat s = Mat::Zero(L.at(0).rows(), L.at(0).cols());
  cplx phase = kI;  // (-i)^{-1}
  for (int n = 0; n <= N && n < static_cast<int>(L.size()); ++n, phase *= -kI) s += phase * L[n];
  return s;
}

}  // namespace stochmap
