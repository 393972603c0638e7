#include "stochmap/maps.hpp"

#include "stochmap/csv.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace stochmap {

namespace {

Mat unitary_of(const Eigen::SelfAdjointEigenSolver<Mat>& es, double t) {
  Vec ph(es.eigenvalues().size());
  for (int k = 0; k < ph.size(); ++k) ph(k) = std::exp(-kI * es.eigenvalues()(k) * t);
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

struct OracleSetup {
  int d = 0, de = 0;
  Eigen::SelfAdjointEigenSolver<Mat> hs, he, v;
  Mat psi0;                    // joint columns |i> (x) |e_r>, ordered (i, r)
  std::vector<double> weights;  // p_r
};

MapOnGrid propagate(const OracleSetup& s, const TimeGrid& grid, int substeps) {
  const double h = grid.dt() / substeps;
  Mat half = kron(unitary_of(s.hs, 0.5 * h), unitary_of(s.he, 0.5 * h));
  Mat step = half * unitary_of(s.v, h) * half;
  for (int m = substeps; m > 1; m /= 2) step = step * step;

  const int d = s.d, de = s.de, r = static_cast<int>(s.weights.size());
  MapOnGrid out;
  out.dim = d;
  Mat psi = s.psi0;
  for (int i = 0; i < grid.nodes(); ++i) {
    if (i > 0) psi = step * psi;
    // system-picture blocks P_{k,r}: rows a, columns e
    std::vector<Mat> blocks(d * r);
    for (int k = 0; k < d; ++k)
      for (int q = 0; q < r; ++q) {
        Mat b(d, de);
        for (int a = 0; a < d; ++a)
          for (int e = 0; e < de; ++e) b(a, e) = psi(a * de + e, k * r + q);
        blocks[k * r + q] = b;
      }
    Mat w = unitary_of(s.hs, -grid.time(i));
    Mat sup(d * d, d * d);
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) {
        Mat o = Mat::Zero(d, d);
        for (int q = 0; q < r; ++q) o += s.weights[q] * blocks[k * r + q] * blocks[l * r + q].adjoint();
        o = w * o * w.adjoint();
        sup.col(k * d + l) = vec_rowmajor(o);
      }
    out.maps.push_back(std::move(sup));
  }
  return out;
}

}  // namespace

OracleResult oracle_map(const OperatorFamily& family, const EnvironmentSpec& env, const TimeGrid& grid,
                        const OracleOptions& opts) {
  env.validate();
  if (env.labels() != family.size())
    throw std::invalid_argument("oracle_map: environment coupling count differs from system operator count");
  OracleSetup s;
  s.d = family.dim();
  s.de = env.dim();
  if (static_cast<long>(s.d) * s.de > 4096) throw std::length_error("oracle_map: joint dimension exceeds 4096");
  const int D = s.d * s.de;
  s.hs.compute(family.h0());
  s.he.compute(hermitize(env.h_env, "H_E"));
  Mat v = Mat::Zero(D, D);
  for (int a = 0; a < family.size(); ++a) v += kron(family.op(a), env.couplings[a]);
  s.v.compute(hermitize(v, "interaction"));

  Eigen::SelfAdjointEigenSolver<Mat> rho_es(hermitize(env.rho_env, "rho_E"));
  std::vector<Vec> evecs;
  for (int k = 0; k < s.de; ++k)
    if (rho_es.eigenvalues()(k) > 1e-15) {
      s.weights.push_back(rho_es.eigenvalues()(k));
      evecs.push_back(rho_es.eigenvectors().col(k));
    }
  const int r = static_cast<int>(s.weights.size());
  s.psi0 = Mat::Zero(D, s.d * r);
  for (int i = 0; i < s.d; ++i)
    for (int q = 0; q < r; ++q) s.psi0.block(i * s.de, i * r + q, s.de, 1) = evecs[q];

  OracleResult res;
  int m = 1;
  MapOnGrid prev = propagate(s, grid, m);
  while (true) {
    MapOnGrid next = propagate(s, grid, 2 * m);
    res.self_convergence = max_superop_distance(prev, next);
    m *= 2;
    prev = std::move(next);
    if (res.self_convergence < opts.tolerance) {
      res.converged = true;
      break;
    }
    if (2 * m > opts.max_substeps) break;
  }
  res.map = std::move(prev);
  res.substeps = m;
  return res;
}

MapOnGrid cumulant_map(int order, const CumulantSource& source, const FamilyOnGrid& family, const TimeGrid& grid) {
  if (order < 1 || order > 4) throw std::invalid_argument("cumulant_map: order must lie in [1, 4]");
  const int d = family.dim, d2 = d * d, L = family.labels;
  if (source.labels() != L) throw std::invalid_argument("cumulant_map: cumulant labels differ from operator labels");
  const bool quantum = source.provenance() == Provenance::Quantum;
  const double dt = grid.dt();

  // superoperator matrices [node][label][0 = Plus, 1 = Minus]
  std::vector<std::vector<std::array<Mat, 2>>> sup(grid.nodes(), std::vector<std::array<Mat, 2>>(L));
  for (int i = 0; i < grid.nodes(); ++i)
    for (int a = 0; a < L; ++a) {
      sup[i][a][0] = superop_matrix(Superop::Plus, family.f[i][a]);
      sup[i][a][1] = superop_matrix(Superop::Minus, family.f[i][a]);
    }

  MapOnGrid out;
  out.dim = d;
  out.maps.push_back(Mat::Identity(d2, d2));
  for (int i = 0; i + 1 < grid.nodes(); ++i) {
    Mat gen = Mat::Zero(d2, d2);
    for (int n = 1; n <= std::min(order, source.max_order()); ++n) {
      std::vector<int> signs(n), labels(n), nodes(n);
      const cplx pref = std::pow(-kI, n) * std::pow(dt, n - 1);
      std::function<void(int, const Mat&)> rec = [&](int p, const Mat& prefix) {
        const int upto = p == 0 ? i : nodes[p - 1];
        const int lo = p == 0 ? i : 0;
        if (p == n - 1) {
          Mat acc = Mat::Zero(d2, d2);
          bool any = false;
          for (int j = lo; j <= upto; ++j)
            for (int a = 0; a < L; ++a)
              for (int t = 0; t < 2; ++t) {
                if (quantum && p == 0 && t == 0) continue;
                nodes[p] = j;
                labels[p] = a;
                signs[p] = t == 1 ? +1 : -1;
                cplx c = source.cumulant(signs, labels, nodes);
                if (c == 0.0) continue;
                acc += c * sup[j][a][t];
                any = true;
              }
          if (any) gen += pref * (prefix * acc);
          return;
        }
        for (int j = lo; j <= upto; ++j)
          for (int a = 0; a < L; ++a)
            for (int t = 0; t < 2; ++t) {
              if (quantum && p == 0 && t == 0) continue;
              nodes[p] = j;
              labels[p] = a;
              signs[p] = t == 1 ? +1 : -1;
              rec(p + 1, p == 0 ? sup[j][a][t] : Mat(prefix * sup[j][a][t]));
            }
      };
      rec(0, Mat::Identity(d2, d2));
    }
    out.maps.push_back(expm(dt * gen) * out.maps.back());
  }
  return out;
}

double tp_defect(const MapOnGrid& map) {
  double worst = 0.0;
  for (const auto& m : map.maps) worst = std::max(worst, trace_deviation(m));
  return worst;
}

MapCptpReport map_cptp_report(const MapOnGrid& map) {
  MapCptpReport r;
  r.min_choi_eig = 0.0;
  for (const auto& m : map.maps) {
    CptpReport c = cptp_report(m);
    r.min_choi_eig = std::min(r.min_choi_eig, c.min_eig);
    r.max_trace_defect = std::max(r.max_trace_defect, c.max_trace_deviation);
    r.max_hermiticity_defect = std::max(r.max_hermiticity_defect, hermiticity_defect(choi_of_superop(m)));
  }
  return r;
}

double max_output_distance(const MapOnGrid& a, const MapOnGrid& b, const Mat& rho) {
  if (a.nodes() != b.nodes()) throw std::invalid_argument("map node counts differ");
  double worst = 0.0;
  for (int i = 0; i < a.nodes(); ++i) worst = std::max(worst, trace_distance(a.apply(i, rho), b.apply(i, rho)));
  return worst;
}

double max_superop_distance(const MapOnGrid& a, const MapOnGrid& b) {
  if (a.nodes() != b.nodes()) throw std::invalid_argument("map node counts differ");
  double worst = 0.0;
  for (int i = 0; i < a.nodes(); ++i) worst = std::max(worst, (a.maps[i] - b.maps[i]).cwiseAbs().maxCoeff());
  return worst;
}

void write_map_csv(const std::string& path, const MapOnGrid& map) {
  CsvWriter w(path);
  w.header({"node", "i", "j", "k", "l", "Re", "Im"});
  const int d = map.dim;
  for (int n = 0; n < map.nodes(); ++n)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l) w.cell(n).cell(i).cell(j).cell(k).cell(l).cell(map.maps[n](i * d + j, k * d + l)).end_row();
}

MapOnGrid read_map_csv(const std::string& path) {
  auto rows = read_csv(path);
  int nodes = 0, d = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    nodes = std::max(nodes, std::stoi(rows[r][0]) + 1);
    for (int c = 1; c <= 4; ++c) d = std::max(d, std::stoi(rows[r][c]) + 1);
  }
  MapOnGrid map;
  map.dim = d;
  map.maps.assign(nodes, Mat::Zero(d * d, d * d));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& x = rows[r];
    int n = std::stoi(x[0]), i = std::stoi(x[1]), j = std::stoi(x[2]), k = std::stoi(x[3]), l = std::stoi(x[4]);
    map.maps[n](i * d + j, k * d + l) = cplx(std::stod(x[5]), std::stod(x[6]));
  }
  return map;
}

Mat tp_correction_operator(int n, const CumulantSource& source, const FamilyOnGrid& family, const std::vector<int>& nodes) {
  if (n < 1 || n > 3 || static_cast<int>(nodes.size()) != n)
    throw std::invalid_argument("tp_correction_operator: need 1 <= n <= 3 and n nodes");
  const int d = family.dim, L = family.labels;
  Mat total = Mat::Zero(d, d);
  if (ordering_weight(nodes) == 0.0) return total;
  std::vector<int> labels(n), signs(n);
  long label_count = 1;
  for (int p = 0; p < n; ++p) label_count *= L;
  for (long lc = 0; lc < label_count; ++lc) {
    long r = lc;
    for (int p = 0; p < n; ++p) {
      labels[p] = static_cast<int>(r % L);
      r /= L;
    }
    for (unsigned sm = 0; sm < (1u << (n - 1)); ++sm) {
      signs[0] = -1;
      for (int p = 1; p < n; ++p) signs[p] = (sm & (1u << (p - 1))) ? -1 : +1;
      cplx c = source.cumulant(signs, labels, nodes);
      if (c == 0.0) continue;
      Mat x = family.f[nodes[0]][labels[0]];
      for (int p = 1; p < n; ++p) {
        const Mat& f = family.f[nodes[p]][labels[p]];
        // l_p = -s_p
        x = signs[p] < 0 ? Mat(x * f + f * x) : Mat(x * f - f * x);
      }
      total += c * x;
    }
  }
  return std::pow(-kI, n + 1) * total;
}

TPCorrection build_tp_correction(int n, const CumulantSource& source, const FamilyOnGrid& family, int node_limit) {
  TPCorrection tc;
  tc.order = n;
  for_each_ordered_tuple(n, node_limit, -1, [&](const std::vector<int>& nodes) {
    Mat a = tp_correction_operator(n, source, family, nodes);
    tc.max_antihermiticity_defect = std::max(tc.max_antihermiticity_defect, (a + a.adjoint()).cwiseAbs().maxCoeff());
    tc.ops.emplace(nodes, std::move(a));
  });
  return tc;
}

}  // namespace stochmap
