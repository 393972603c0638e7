#include "stochmap/cumulants.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace stochmap {

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

std::vector<int> positions_of(unsigned mask) {
  std::vector<int> out;
  for (int p = 0; mask; ++p, mask >>= 1)
    if (mask & 1u) out.push_back(p);
  return out;
}

cplx signed_part(cplx z, int s) { return s > 0 ? cplx(z.real(), 0.0) : cplx(0.0, z.imag()); }

}  // namespace

long bell_number(int n) {
  std::vector<std::vector<long>> tri(n + 1);
  tri[0] = {1};
  for (int i = 1; i <= n; ++i) {
    tri[i].push_back(tri[i - 1].back());
    for (long v : tri[i - 1]) tri[i].push_back(tri[i].back() + v);
  }
  return tri[n][0];
}

std::vector<SetPartition> partitions(int n) {
  if (n < 0 || n > 6) throw std::out_of_range("partitions: n must lie in [0, 6]");
  std::vector<SetPartition> out;
  if (n == 0) {
    out.push_back({});
    return out;
  }
  std::vector<int> a(n, 0), mx(n, 0);
  while (true) {
    int blocks = *std::max_element(a.begin(), a.end()) + 1;
    SetPartition p(blocks);
    for (int i = 0; i < n; ++i) p[a[i]].push_back(i);
    out.push_back(std::move(p));
    int k = n - 1;
    while (k > 0 && a[k] == mx[k - 1] + 1) --k;
    if (k == 0) break;
    ++a[k];
    mx[k] = std::max(mx[k - 1], a[k]);
    for (int j = k + 1; j < n; ++j) {
      a[j] = 0;
      mx[j] = mx[k];
    }
  }
  return out;
}

cplx ursell(int n, const SubsetMoment& moment) {
  if (n == 0) return 0.0;
  std::vector<cplx> cache(1u << n);
  std::vector<bool> have(1u << n, false);
  auto m = [&](const std::vector<int>& block) {
    unsigned mask = 0;
    for (int p : block) mask |= 1u << p;
    if (!have[mask]) {
      cache[mask] = moment(positions_of(mask));
      have[mask] = true;
    }
    return cache[mask];
  };
  cplx total = 0.0;
  for (const auto& part : partitions(n)) {
    const int b = static_cast<int>(part.size());
    cplx prod = factorial(b - 1) * ((b - 1) % 2 ? -1.0 : 1.0);
    for (const auto& block : part) prod *= m(block);
    total += prod;
  }
  return total;
}

cplx moment_from_cumulants(int n, const SubsetMoment& cumulant) {
  if (n == 0) return 1.0;
  cplx total = 0.0;
  for (const auto& part : partitions(n)) {
    cplx prod = 1.0;
    for (const auto& block : part) prod *= cumulant(block);
    total += prod;
  }
  return total;
}

double ordering_weight(const std::vector<int>& nodes) {
  double w = 1.0;
  int run = 1;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    if (nodes[k] > nodes[k - 1]) return 0.0;
    if (nodes[k] == nodes[k - 1]) {
      ++run;
      w /= run;
    } else {
      run = 1;
    }
  }
  return w;
}

cplx GaussianStochasticCumulants::cumulant(const std::vector<int>& s, const std::vector<int>& a,
                                           const std::vector<int>& nodes) const {
  const std::size_t n = s.size();
  if (n == 0 || n > 2) return 0.0;
  double w = ordering_weight(nodes);
  if (w == 0.0) return 0.0;
  if (n == 1) return w * signed_part(model_.mean()(model_.index(a[0], nodes[0])), s[0]);
  const int p = model_.index(a[0], nodes[0]), q = model_.index(a[1], nodes[1]);
  cplx S = model_.S()(p, q), A = model_.A()(p, q);
  double s1 = s[0], s2 = s[1];
  return w * 0.25 * (S + s2 * std::conj(A) + s1 * A + s1 * s2 * std::conj(S));
}

QuantumGaussianCumulants::QuantumGaussianCumulants(int labels, int nodes, Vec mean, Mat D)
    : labels_(labels), nodes_(nodes), mean_(std::move(mean)), D_(std::move(D)) {
  const int m = labels * nodes;
  if (mean_.size() == 0) mean_ = Vec::Zero(m);
  if (mean_.size() != m || D_.rows() != m || D_.cols() != m)
    throw std::invalid_argument("QuantumGaussianCumulants: size mismatch");
}

cplx QuantumGaussianCumulants::cumulant(const std::vector<int>& s, const std::vector<int>& a,
                                        const std::vector<int>& nodes) const {
  const std::size_t n = s.size();
  if (n == 0 || n > 2) return 0.0;
  double w = ordering_weight(nodes);
  if (w == 0.0) return 0.0;
  if (s[0] < 0) return 0.0;
  if (n == 1) return w * mean_(a[0] * nodes_ + nodes[0]);
  cplx d = D(a[0], nodes[0], a[1], nodes[1]);
  return w * 0.5 * (d + double(s[1]) * std::conj(d));
}

cplx MomentCumulants::cumulant(const std::vector<int>& s, const std::vector<int>& a,
                               const std::vector<int>& nodes) const {
  const int n = static_cast<int>(s.size());
  if (n == 0 || n > max_order_) return 0.0;
  double w = ordering_weight(nodes);
  if (w == 0.0) return 0.0;
  auto sub = [&](const std::vector<int>& pos) {
    std::vector<int> ss, aa, nn;
    for (int p : pos) {
      ss.push_back(s[p]);
      aa.push_back(a[p]);
      nn.push_back(nodes[p]);
    }
    return moment_(ss, aa, nn);
  };
  return w * ursell(n, sub);
}

namespace {

// coefficient of the centered square X_k in phi^s_a / 2
cplx square_coeff(const SquaredGaussianFamily& fam, int s, int a, int k) {
  return signed_part(fam.weights()[a][k], s);
}

template <class F>
cplx multilinear(const SquaredGaussianFamily& fam, const std::vector<int>& s, const std::vector<int>& a,
                 const std::vector<int>& nodes, F kernel) {
  const int n = static_cast<int>(s.size());
  const int base_labels = fam.base().labels();
  std::vector<int> ks(n, 0);
  std::vector<std::pair<int, int>> pts(n);
  cplx total = 0.0;
  while (true) {
    cplx c = 1.0;
    for (int p = 0; p < n && c != 0.0; ++p) c *= square_coeff(fam, s[p], a[p], ks[p]);
    if (c != 0.0) {
      for (int p = 0; p < n; ++p) pts[p] = {ks[p], nodes[p]};
      total += c * kernel(pts);
    }
    int p = 0;
    while (p < n && ++ks[p] == base_labels) ks[p++] = 0;
    if (p == n) break;
  }
  return total;
}

}  // namespace

MomentFn squared_gaussian_moments(const SquaredGaussianFamily& family) {
  auto fam = std::make_shared<const SquaredGaussianFamily>(family);
  return [fam](const std::vector<int>& s, const std::vector<int>& a, const std::vector<int>& nodes) {
    if (s.empty()) return cplx(1.0);
    return multilinear(*fam, s, a, nodes, [&](const auto& pts) { return fam->square_moment(pts); });
  };
}

cplx squared_gaussian_cumulant(const SquaredGaussianFamily& family, const std::vector<int>& s,
                               const std::vector<int>& a, const std::vector<int>& nodes) {
  double w = ordering_weight(nodes);
  if (w == 0.0 || s.size() < 2) return 0.0;
  return w * multilinear(family, s, a, nodes, [&](const auto& pts) { return family.square_cumulant(pts); });
}

MomentFn gaussian_stochastic_moments(const NoiseModel& model) {
  auto shared = std::make_shared<const NoiseModel>(model);
  return [shared](const std::vector<int>& s, const std::vector<int>& a, const std::vector<int>& nodes) {
    const NoiseModel& model = *shared;
    const int n = static_cast<int>(s.size());
    std::vector<cplx> mean(n);
    Mat cov(n, n);
    for (int p = 0; p < n; ++p) {
      mean[p] = signed_part(model.mean()(model.index(a[p], nodes[p])), s[p]);
      for (int q = 0; q < n; ++q) {
        const int i = model.index(a[p], nodes[p]), j = model.index(a[q], nodes[q]);
        cplx S = model.S()(i, j), A = model.A()(i, j);
        cov(p, q) = 0.25 * (S + double(s[q]) * std::conj(A) + double(s[p]) * A + double(s[p] * s[q]) * std::conj(S));
      }
    }
    std::function<cplx(unsigned)> iss = [&](unsigned mask) -> cplx {
      if (mask == 0) return 1.0;
      int first = 0;
      while (!(mask & (1u << first))) ++first;
      unsigned rest = mask & ~(1u << first);
      cplx total = mean[first] * iss(rest);
      for (int q = first + 1; q < n; ++q)
        if (rest & (1u << q)) total += cov(first, q) * iss(rest & ~(1u << q));
      return total;
    };
    return iss((1u << n) - 1);
  };
}

Mat SuperopString::apply(const FamilyOnGrid& fam, const Mat& rho) const {
  Mat x = rho;
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) x = apply_superop(it->tag, fam.f[it->node][it->label], x);
  return coeff * x;
}

Mat SuperopString::matrix(const FamilyOnGrid& fam) const {
  const int d2 = fam.dim * fam.dim;
  Mat m = Mat::Identity(d2, d2);
  for (const auto& fa : factors) m = m * superop_matrix(fa.tag, fam.f[fa.node][fa.label]);
  return coeff * m;
}

std::vector<SuperopString> assemble_k(int n, const CumulantSource& source, const std::vector<int>& nodes) {
  if (n < 1 || n > 4 || static_cast<int>(nodes.size()) != n)
    throw std::invalid_argument("assemble_k: need 1 <= n <= 4 and n nodes");
  std::vector<SuperopString> out;
  if (ordering_weight(nodes) == 0.0) return out;
  const int L = source.labels();
  const bool quantum = source.provenance() == Provenance::Quantum;
  std::vector<int> labels(n, 0), signs(n);
  long label_count = 1;
  for (int p = 0; p < n; ++p) label_count *= L;
  for (long lc = 0; lc < label_count; ++lc) {
    long r = lc;
    for (int p = 0; p < n; ++p) {
      labels[p] = static_cast<int>(r % L);
      r /= L;
    }
    for (unsigned sm = 0; sm < (1u << n); ++sm) {
      // bit p set: l_p = Minus, so the cumulant sign s_p = +
      if (quantum && !(sm & 1u)) continue;
      SuperopString str;
      for (int p = 0; p < n; ++p) {
        bool minus = sm & (1u << p);
        signs[p] = minus ? +1 : -1;
        str.factors.push_back({minus ? Superop::Minus : Superop::Plus, labels[p], nodes[p]});
      }
      str.coeff = source.cumulant(signs, labels, nodes);
      if (str.coeff != 0.0) out.push_back(std::move(str));
    }
  }
  return out;
}

void for_each_ordered_tuple(int n, int node_limit, int lead, const std::function<void(const std::vector<int>&)>& body) {
  std::vector<int> t(n);
  std::function<void(int, int)> rec = [&](int pos, int upto) {
    if (pos == n) {
      body(t);
      return;
    }
    for (int j = 0; j <= upto; ++j) {
      t[pos] = j;
      rec(pos + 1, j);
    }
  };
  if (n == 0) {
    body(t);
    return;
  }
  if (lead >= 0) {
    t[0] = lead;
    rec(1, lead);
  } else {
    rec(0, node_limit - 1);
  }
}

TpConditionReport tp_condition_check(const CumulantSource& source, int max_order, int node_limit) {
  TpConditionReport rep;
  rep.order = max_order;
  const int L = source.labels();
  for (int n = 1; n <= max_order; ++n) {
    std::vector<int> labels(n), signs(n);
    long label_count = 1;
    for (int p = 0; p < n; ++p) label_count *= L;
    for_each_ordered_tuple(n, node_limit, -1, [&](const std::vector<int>& nodes) {
      for (long lc = 0; lc < label_count; ++lc) {
        long r = lc;
        for (int p = 0; p < n; ++p) {
          labels[p] = static_cast<int>(r % L);
          r /= L;
        }
        for (unsigned sm = 0; sm < (1u << (n - 1)); ++sm) {
          signs[0] = -1;
          for (int p = 1; p < n; ++p) signs[p] = (sm & (1u << (p - 1))) ? -1 : +1;
          double v = std::abs(source.cumulant(signs, labels, nodes));
          if (v > rep.max_abs) {
            rep.max_abs = v;
            rep.worst_signs = signs;
            rep.worst_labels = labels;
            rep.worst_nodes = nodes;
          }
        }
      }
    });
  }
  return rep;
}

SolvabilityReport solvability_appB(int n, const CumulantSource& source, const std::vector<int>& labels,
                                   const std::vector<int>& nodes, double tol) {
  if (n < 1 || n > 4 || static_cast<int>(labels.size()) != n || static_cast<int>(nodes.size()) != n)
    throw std::invalid_argument("solvability_appB: need 1 <= n <= 4 with n labels and nodes");
  SolvabilityReport rep;
  rep.order = n;
  std::vector<cplx> even, odd;
  std::vector<int> signs(n);
  for (unsigned sm = 0; sm < (1u << (n - 1)); ++sm) {
    signs[0] = -1;
    int minus = 0;
    for (int p = 1; p < n; ++p) {
      bool m = sm & (1u << (p - 1));
      signs[p] = m ? -1 : +1;
      minus += m;
    }
    (minus % 2 ? odd : even).push_back(source.cumulant(signs, labels, nodes));
  }
  rep.equations = static_cast<int>(even.size() + odd.size());
  auto fit = [](const std::vector<cplx>& v, cplx& k) {
    if (v.empty()) return 0.0;
    k = 0.0;
    for (auto c : v) k += c;
    k /= static_cast<double>(v.size());
    double r = 0.0;
    for (auto c : v) r += std::norm(c - k);
    return r;
  };
  rep.residual = std::sqrt(fit(even, rep.k_even) + fit(odd, rep.k_odd));
  rep.solvable = rep.residual <= tol;
  return rep;
}

}  // namespace stochmap
