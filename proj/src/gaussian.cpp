#include "stochmap/gaussian.hpp"

#include "stochmap/csv.hpp"
#include "stochmap/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace stochmap {

namespace {

constexpr int kMaxDepth = 3;

long long multichoose(long long m, int k) {
  // C(m + k - 1, k)
  long long r = 1;
  for (int q = 1; q <= k; ++q) r = r * (m + q - 1) / q;
  return r;
}

struct Multiset {
  std::array<int, kMaxDepth> ids{};
  int size = 0;
};

// colex rank of a sorted multiset: sum_k C(x_k + k - 1, k), k = 1..size
long long rank_in_block(const Multiset& s) {
  long long r = 0;
  for (int k = 0; k < s.size; ++k) r += multichoose(s.ids[k], k + 1);
  return r;
}

// row-major small matrices: out (d x c) += alpha * A (d x d) * v (d x c)
inline void gemm_acc(int d, int c, cplx alpha, const cplx* A, const cplx* v, cplx* out) {
  for (int r = 0; r < d; ++r)
    for (int k = 0; k < d; ++k) {
      const cplx a = alpha * A[r * d + k];
      if (a == 0.0) continue;
      const cplx* vr = v + k * c;
      cplx* o = out + r * c;
      for (int q = 0; q < c; ++q) o[q] += a * vr[q];
    }
}

std::vector<cplx> row_major(const Mat& m) {
  std::vector<cplx> out(m.size());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
  return out;
}

class Hierarchy {
 public:
  Hierarchy(int ids, int depth) {
    offset_.assign(depth + 2, 0);
    for (int k = 0; k <= depth; ++k) offset_[k + 1] = offset_[k] + multichoose(ids, k);
    states_.reserve(offset_[depth + 1]);
    // colex order within each block: largest element varies slowest
    states_.push_back(Multiset{});
    for (int k = 1; k <= depth; ++k) {
      Multiset m;
      m.size = k;
      push(m, k - 1, ids - 1);
    }
  }

  long long count() const { return offset_.back(); }
  long long active(int k, int ids) const { return multichoose(ids, k); }
  long long offset(int k) const { return offset_[k]; }
  const Multiset& state(long long idx) const { return states_[idx]; }
  long long index_of(const Multiset& s) const { return offset_[s.size] + rank_in_block(s); }

 private:
  void push(Multiset& m, int slot, int upper) {
    for (int x = 0; x <= upper; ++x) {
      m.ids[slot] = x;
      if (slot == 0)
        states_.push_back(m);
      else
        push(m, slot - 1, x);
    }
  }

  std::vector<long long> offset_;
  std::vector<Multiset> states_;
};

}  // namespace

struct XiPropagator::Plan {
  int n = 0, L = 0, d = 0, depth = 0;
  double dt = 0.0;
  bool has_k = false;
  std::vector<std::vector<cplx>> f;        // [i * L + a], row-major
  std::vector<std::vector<cplx>> closure;  // [i]: dt^2 sum_{k<=i} K(i,k) f(i) f(k)
  std::vector<std::vector<cplx>> B;        // [i][x * d*d]: sum_alpha K'(alpha,b; i,j) f_alpha(i), x = j*L+b <= i*L+L-1
  std::vector<Mat> memory0;                // depth 0: dt sum_{j<i} K(i,j) f(i) f(j)
  std::unique_ptr<Hierarchy> h;
};

XiPropagator::XiPropagator(const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid, const XiOptions& opts)
    : opts_(opts) {
  auto plan = std::make_shared<Plan>();
  Plan& p = *plan;
  p.n = grid.nodes();
  p.L = family.labels;
  p.d = family.dim;
  p.dt = grid.dt();
  if (opts.depth < 0 || opts.depth > kMaxDepth)
    throw std::invalid_argument("evolve_xi: depth must be 0.." + std::to_string(kMaxDepth));
  if (static_cast<int>(family.f.size()) != p.n) throw std::invalid_argument("evolve_xi: family grid mismatch");
  p.has_k = !K.is_zero();
  if (p.has_k && (K.labels() != p.L || K.nodes() != p.n)) throw std::invalid_argument("evolve_xi: kernel shape mismatch");
  p.depth = p.has_k ? opts.depth : 0;
  const int n = p.n, L = p.L, d = p.d;
  p.f.resize(static_cast<std::size_t>(n) * L);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < L; ++a) p.f[i * L + a] = row_major(family.at(i, a));
  p.closure.assign(n, std::vector<cplx>(d * d, 0.0));
  p.memory0.assign(n, Mat::Zero(d, d));
  if (p.has_k) {
    for (int i = 0; i < n; ++i) {
      Mat m = Mat::Zero(d, d), prior = Mat::Zero(d, d);
      for (int k = 0; k <= i; ++k)
        for (int b = 0; b < L; ++b)
          for (int al = 0; al < L; ++al) {
            cplx kv = K(al, b, i, k);
            if (kv == 0.0) continue;
            Mat prod = kv * family.at(i, al) * family.at(k, b);
            m += prod;
            if (k < i) prior += prod;
          }
      p.closure[i] = row_major(p.dt * p.dt * m);
      p.memory0[i] = p.dt * prior;
    }
  }
  if (p.depth > 0) {
    p.B.resize(n);
    for (int i = 0; i < n; ++i) {
      p.B[i].assign(static_cast<std::size_t>(i + 1) * L * d * d, 0.0);
      for (int j = 0; j <= i; ++j)
        for (int b = 0; b < L; ++b) {
          cplx* bx = &p.B[i][(j * L + b) * d * d];
          for (int al = 0; al < L; ++al) {
            cplx kv = j == i ? K.raw(al, b, i, j) : K(al, b, i, j);
            if (kv == 0.0) continue;
            const auto& f = p.f[i * L + al];
            for (int e = 0; e < d * d; ++e) bx[e] += kv * f[e];
          }
        }
    }
    p.h = std::make_unique<Hierarchy>(n * L, p.depth);
  } else {
    p.h = std::make_unique<Hierarchy>(0, 0);
  }
  plan_ = std::move(plan);
}

TrajectoryState XiPropagator::evolve(const NoisePath& path, const Mat& psi0) const {
  const Plan& p = *plan_;
  const Hierarchy& h = *p.h;
  const int n = p.n, L = p.L, d = p.d, c = static_cast<int>(psi0.cols()), depth = p.depth;
  const double dt = p.dt;
  if (psi0.rows() != d) throw std::invalid_argument("evolve_xi: initial state dimension mismatch");
  if (path.labels != L || path.nodes != n) throw std::invalid_argument("evolve_xi: noise path shape mismatch");

  TrajectoryState out;
  out.dim = d;
  out.cols = c;
  out.psi.reserve(n);
  if (opts_.record_memory) out.memory.reserve(n);

  const int blk = d * c;
  std::vector<cplx> phi(h.count() * blk, 0.0), term(phi.size()), next(phi.size());
  std::vector<char> live(h.count(), 0), term_live(h.count()), next_live(h.count());
  {
    auto v = row_major(psi0);
    std::copy(v.begin(), v.end(), phi.begin());
    live[0] = 1;
  }
  auto to_mat = [&](long long idx) {
    Mat m(d, c);
    for (int r = 0; r < d; ++r)
      for (int q = 0; q < c; ++q) m(r, q) = phi[idx * blk + r * c + q];
    return m;
  };

  std::vector<cplx> gn(d * d), gcl(d * d), acc(blk);
  for (int i = 0; i < n; ++i) {
    out.psi.push_back(to_mat(0));
    if (opts_.record_memory) {
      Mat mem = Mat::Zero(d, c);
      if (p.has_k && depth == 0) {
        mem = p.memory0[i] * out.psi.back();
      } else if (p.has_k) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int x = 0; x < i * L; ++x) {
          Multiset s;
          s.size = 1;
          s.ids[0] = x;
          long long idx = h.index_of(s);
          if (live[idx]) gemm_acc(d, c, 1.0, &p.B[i][x * d * d], &phi[idx * blk], acc.data());
        }
        for (int r = 0; r < d; ++r)
          for (int q = 0; q < c; ++q) mem(r, q) = acc[r * c + q];
      }
      out.memory.push_back(mem);
    }
    if (i == n - 1) break;

    std::fill(gn.begin(), gn.end(), 0.0);
    for (int a = 0; a < L; ++a) {
      const cplx w = -kI * dt * path(a, i);
      if (w == 0.0) continue;
      const auto& f = p.f[i * L + a];
      for (int e = 0; e < d * d; ++e) gn[e] += w * f[e];
    }
    for (int e = 0; e < d * d; ++e) gcl[e] = gn[e] - p.closure[i][e];

    const int ids_now = (i + 1) * L;
    std::vector<long long> lo(depth + 1), hi(depth + 1);
    for (int k = 0; k <= depth; ++k) {
      lo[k] = h.offset(k);
      hi[k] = h.offset(k) + h.active(k, depth > 0 ? ids_now : 0);
    }

    // exp of the block generator applied by Taylor series
    term = phi;
    term_live = live;
    double scale = 0.0;
    for (cplx v : phi) scale = std::max(scale, std::abs(v));
    for (int t = 1;; ++t) {
      if (t > opts_.max_taylor_terms) throw std::runtime_error("evolve_xi: Taylor series did not converge within a slice");
      for (int k = 0; k <= depth; ++k)
        for (long long s = lo[k]; s < hi[k]; ++s) {
          std::fill(&next[s * blk], &next[s * blk] + blk, 0.0);
          next_live[s] = 0;
        }
      const double inv = 1.0 / t;
      for (int k = 0; k <= depth; ++k)
        for (long long s = lo[k]; s < hi[k]; ++s) {
          if (!term_live[s]) continue;
          const cplx* v = &term[s * blk];
          const Multiset& st = h.state(s);
          gemm_acc(d, c, inv, (k == depth ? gcl : gn).data(), v, &next[s * blk]);
          next_live[s] = 1;
          if (k < depth) {
            for (int b = 0; b < L; ++b) {
              Multiset up = st;
              const int y = i * L + b;
              int q = up.size;
              while (q > 0 && up.ids[q - 1] > y) {
                up.ids[q] = up.ids[q - 1];
                --q;
              }
              up.ids[q] = y;
              ++up.size;
              const long long u = h.index_of(up);
              gemm_acc(d, c, inv * dt, p.f[i * L + b].data(), v, &next[u * blk]);
              next_live[u] = 1;
            }
          }
          for (int q = 0; q < st.size; ++q) {
            if (q > 0 && st.ids[q] == st.ids[q - 1]) continue;
            int mult = 1;
            while (q + mult < st.size && st.ids[q + mult] == st.ids[q]) ++mult;
            Multiset down;
            down.size = st.size - 1;
            for (int r = 0, w = 0; r < st.size; ++r)
              if (r != q) down.ids[w++] = st.ids[r];
            const long long u = h.index_of(down);
            gemm_acc(d, c, -inv * dt * mult, &p.B[i][st.ids[q] * d * d], v, &next[u * blk]);
            next_live[u] = 1;
          }
        }
      double tmax = 0.0;
      for (int k = 0; k <= depth; ++k)
        for (long long s = lo[k]; s < hi[k]; ++s) {
          if (!next_live[s]) continue;
          live[s] = 1;
          for (int e = 0; e < blk; ++e) {
            phi[s * blk + e] += next[s * blk + e];
            tmax = std::max(tmax, std::abs(next[s * blk + e]));
          }
        }
      std::swap(term, next);
      std::swap(term_live, next_live);
      if (tmax <= opts_.taylor_tol * std::max(scale, 1e-300)) break;
    }
  }
  return out;
}

TrajectoryState evolve_xi(const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                          const Mat& psi0, const XiOptions& opts) {
  return XiPropagator(K, family, grid, opts).evolve(path, psi0);
}

NoisePath absorb_mean_shift(const NoisePath& path, const NoiseModel& model) {
  NoisePath p = path;
  for (int a = 0; a < p.labels; ++a)
    for (int i = 0; i < p.nodes; ++i) p(a, i) -= kI * model.mean()(model.index(a, i)).imag();
  return p;
}

double EnsembleAverage::stderr_of(int node, const std::function<cplx(const Mat&)>& functional) const {
  const int G = static_cast<int>(group_sizes.size());
  if (G < 2) return 0.0;
  const double N = count;
  cplx full = functional(mean[node]);
  std::vector<cplx> loo(G);
  cplx avg = 0.0;
  for (int g = 0; g < G; ++g) {
    cplx part = functional(group_mean[g][node]);
    loo[g] = (N * full - static_cast<double>(group_sizes[g]) * part) / (N - group_sizes[g]);
    avg += loo[g];
  }
  avg /= static_cast<double>(G);
  double var = 0.0;
  for (int g = 0; g < G; ++g) var += std::norm(loo[g] - avg);
  return std::sqrt(var * (G - 1.0) / G);
}

Eigen::MatrixXd EnsembleAverage::entry_stderr(int node) const {
  const Mat& m = mean[node];
  Eigen::MatrixXd se(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) se(r, c) = stderr_of(node, [r, c](const Mat& x) { return x(r, c); });
  return se;
}

EnsembleAverage ensemble_average(int count, int threads, int groups, const std::function<TrajectorySample(int)>& trajectory) {
  if (count < 1) throw std::invalid_argument("ensemble: need at least one trajectory");
  groups = std::max(1, std::min(groups, count));
  EnsembleAverage out;
  out.count = count;
  out.group_sizes.resize(groups);
  std::vector<int> start(groups + 1);
  for (int g = 0; g <= groups; ++g) start[g] = static_cast<int>(static_cast<long long>(count) * g / groups);
  for (int g = 0; g < groups; ++g) out.group_sizes[g] = start[g + 1] - start[g];
  out.group_mean.resize(groups);
  std::vector<double> drift(groups, 0.0);
  parallel_for(groups, threads, [&](int g) {
    std::vector<Mat> sum;
    for (int k = start[g]; k < start[g + 1]; ++k) {
      TrajectorySample s = trajectory(k);
      if (sum.empty()) {
        sum = s.observables;
      } else {
        if (s.observables.size() != sum.size()) throw std::runtime_error("ensemble: trajectories differ in node count");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s.observables[i];
      }
      drift[g] = std::max(drift[g], s.drift);
    }
    for (auto& m : sum) m /= static_cast<double>(start[g + 1] - start[g]);
    out.group_mean[g] = std::move(sum);
  });
  const int nodes = static_cast<int>(out.group_mean[0].size());
  out.mean.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    out.mean[i] = Mat::Zero(out.group_mean[0][i].rows(), out.group_mean[0][i].cols());
    for (int g = 0; g < groups; ++g) out.mean[i] += static_cast<double>(out.group_sizes[g]) * out.group_mean[g][i];
    out.mean[i] /= static_cast<double>(count);
  }
  for (double x : drift) out.max_drift = std::max(out.max_drift, x);
  return out;
}

namespace {

TrajectoryState run_one(const NoiseModel& noise, const XiPropagator& prop, const Mat& psi0, const EnsembleOptions& opts, int k) {
  NoisePath p = absorb_mean_shift(noise.sample(opts.seed, static_cast<std::uint64_t>(k)), noise);
  return prop.evolve(p, psi0);
}

}  // namespace

EnsembleAverage density_ensemble(const NoiseModel& noise, const DriftKernel& K, const FamilyOnGrid& family,
                                 const TimeGrid& grid, const Vec& psi0, const EnsembleOptions& opts) {
  Mat col = psi0;
  XiPropagator prop(K, family, grid, opts.xi);
  return ensemble_average(opts.n_traj, opts.threads, opts.groups, [&](int k) {
    TrajectoryState st = run_one(noise, prop, col, opts, k);
    TrajectorySample s;
    const double n0 = col.squaredNorm();
    for (const Mat& psi : st.psi) {
      s.observables.push_back(psi * psi.adjoint());
      s.drift = std::max(s.drift, std::abs(psi.squaredNorm() - n0));
    }
    return s;
  });
}

EnsembleAverage map_ensemble(const NoiseModel& noise, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                             const EnsembleOptions& opts) {
  const int d = family.dim;
  Mat id = Mat::Identity(d, d);
  XiPropagator prop(K, family, grid, opts.xi);
  return ensemble_average(opts.n_traj, opts.threads, opts.groups, [&](int k) {
    TrajectoryState st = run_one(noise, prop, id, opts, k);
    TrajectorySample s;
    for (const Mat& xi : st.psi) {
      s.observables.push_back(kron(xi, xi.conjugate()));
      s.drift = std::max(s.drift, (xi.adjoint() * xi - id).cwiseAbs().maxCoeff());
    }
    return s;
  });
}

bool TraceReport::within(double sigmas, double floor) const {
  for (std::size_t i = 0; i < defect.size(); ++i)
    if (defect[i] > sigmas * stderr_[i] + floor) return false;
  return true;
}

TraceReport density_trace_report(const EnsembleAverage& rho) {
  TraceReport r;
  for (int i = 0; i < rho.nodes(); ++i) {
    double def = std::abs(rho.mean[i].trace() - 1.0);
    double se = rho.stderr_of(i, [](const Mat& x) { return x.trace(); });
    r.defect.push_back(def);
    r.stderr_.push_back(se);
    r.max_defect = std::max(r.max_defect, def);
    if (se > 0) r.max_ratio = std::max(r.max_ratio, def / se);
  }
  return r;
}

TraceReport map_trace_report(const EnsembleAverage& maps, int d) {
  TraceReport r;
  for (int i = 0; i < maps.nodes(); ++i) {
    double worst = -1.0, worst_se = 0.0;
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) {
        auto fn = [d, k, l](const Mat& m) {
          cplx t = 0.0;
          for (int a = 0; a < d; ++a) t += m(a * d + a, k * d + l);
          return t - (k == l ? 1.0 : 0.0);
        };
        double def = std::abs(fn(maps.mean[i]));
        double se = maps.stderr_of(i, fn);
        if (se > 0) r.max_ratio = std::max(r.max_ratio, def / se);
        if (def > worst) {
          worst = def;
          worst_se = se;
        }
      }
    r.defect.push_back(worst);
    r.stderr_.push_back(worst_se);
    r.max_defect = std::max(r.max_defect, worst);
  }
  return r;
}

BathSplit parse_bath_split(const std::string& name) {
  if (name == "circular") return BathSplit::Circular;
  if (name == "real_symmetric") return BathSplit::RealSymmetric;
  if (name == "scaled") return BathSplit::Scaled;
  throw std::invalid_argument("unknown bath split '" + name + "' (circular, real_symmetric, scaled)");
}

MatchedNoise match_bath(const BathCorrelation& bath, const TimeGrid& grid, int labels, BathSplit split, double scale) {
  const int m = labels * grid.nodes();
  if (bath.D.rows() != m || bath.D.cols() != m) throw std::invalid_argument("match_bath: correlation size mismatch");
  Mat A = 0.5 * (bath.D + bath.D.adjoint());
  Mat S = Mat::Zero(m, m);
  if (split == BathSplit::RealSymmetric) S = A.real().cast<cplx>();
  if (split == BathSplit::Scaled) S = scale * A.real().cast<cplx>();
  Vec mean = bath.mean.size() == m ? Vec(bath.mean.real().cast<cplx>()) : Vec(Vec::Zero(m));
  NoiseModel model(grid, labels, mean, S, A);
  DriftKernel K = drift_kernel(model);
  return {std::move(model), std::move(K)};
}

void write_ensemble_csv(const std::string& path, const EnsembleAverage& avg) {
  CsvWriter w(path);
  w.header({"node", "i", "j", "Re", "Im", "stderr"});
  for (int n = 0; n < avg.nodes(); ++n) {
    Eigen::MatrixXd se = avg.entry_stderr(n);
    const Mat& m = avg.mean[n];
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        w.cell(n).cell(i).cell(j).cell(m(i, j)).cell(se(i, j));
        w.end_row();
      }
  }
}

}  // namespace stochmap
