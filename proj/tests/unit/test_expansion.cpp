#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stochmap/expansion.hpp"
#include "stochmap/gaussian.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace stochmap;
using testutil::max_abs;

namespace {

NoiseModel ou_noise(const TimeGrid& grid, double amp, double tau, double w) {
  const int n = grid.nodes();
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double d = grid.time(i) - grid.time(j);
      A(i, j) = amp * std::exp(-std::abs(d) / tau) * std::exp(-kI * w * d);
    }
  return NoiseModel(grid, 1, Vec::Zero(n), Mat::Zero(n, n), A);
}

FamilyOnGrid qubit(const TimeGrid& grid, double g, double h = 0.5) {
  return FamilyOnGrid(OperatorFamily(h * pauli_z(), {Mat(g * pauli_x())}), grid);
}

struct Setup {
  TimeGrid grid{2.0, 12};
  NoiseModel model = ou_noise(grid, 1.0, 1.0, 1.0);
  DriftKernel K = drift_kernel(model);
  NoisePath path = model.sample(5, 0);
  int node = 12;
};

}  // namespace

TEST_CASE("low orders have their closed forms") {
  Setup s;
  FamilyOnGrid fam = qubit(s.grid, 0.7);
  const double dt = s.grid.dt();
  CHECK(max_abs(xi_term(0, s.path, s.K, fam, s.grid, s.node).value - Mat::Identity(2, 2)) == 0.0);
  Mat x1 = Mat::Zero(2, 2), d2 = Mat::Zero(2, 2);
  for (int j = 0; j < s.node; ++j) {
    x1 += dt * s.path(0, j) * fam.at(j, 0);
    d2 += dt * s.K(0, 0, s.node, j) * fam.at(s.node, 0) * fam.at(j, 0);
  }
  CHECK(max_abs(xi_term(1, s.path, s.K, fam, s.grid, s.node).value - x1) < 1e-14);
  CHECK(max_abs(d_term(1, s.path, s.K, fam, s.grid, s.node).value - d2) < 1e-14);
  CHECK(d_term(1, s.path, s.K, fam, s.grid, s.node).order == 2);
  CHECK(max_abs(d_term(0, s.path, s.K, fam, s.grid, s.node).value) == 0.0);
  CHECK(max_abs(xi_term(3, s.path, s.K, fam, s.grid, 0).value) == 0.0);
}

TEST_CASE("terms are homogeneous of their order in the coupling") {
  Setup s;
  const double lambda = 1.7;
  for (int n = 1; n <= 4; ++n) {
    Mat a = xi_term(n, s.path, s.K, qubit(s.grid, 0.3, 0.0), s.grid, 8).value;
    Mat b = xi_term(n, s.path, s.K, qubit(s.grid, 0.3 * lambda, 0.0), s.grid, 8).value;
    CHECK(max_abs(b - std::pow(lambda, n) * a) < 1e-12 * (1.0 + max_abs(b)));
  }
  for (int n = 1; n <= 3; ++n) {
    Mat a = d_term(n, s.path, s.K, qubit(s.grid, 0.3), s.grid, 8).value;
    Mat b = d_term(n, s.path, s.K, qubit(s.grid, 0.3 * lambda), s.grid, 8).value;
    CHECK(max_abs(b - std::pow(lambda, n + 1) * a) < 1e-12 * (1.0 + max_abs(b)));
  }
}

TEST_CASE("second order matches the symmetric difference of the propagator") {
  Setup s;
  NoisePath zero{1, s.grid.nodes(), std::vector<cplx>(s.grid.nodes(), 0.0)};
  XiOptions o;
  o.depth = 2;
  const double g = 1e-2;
  auto xi_at = [&](double gg) { return evolve_xi(zero, s.K, qubit(s.grid, gg), s.grid, Mat::Identity(2, 2), o).psi[s.node]; };
  Mat fd = (xi_at(g) + xi_at(-g) - 2.0 * Mat::Identity(2, 2)) / (2.0 * g * g);
  Mat xi2 = xi_term(2, zero, s.K, qubit(s.grid, 1.0), s.grid, s.node).value;
  CHECK(max_abs(fd + xi2) < 1e-3 * max_abs(xi2));
}

TEST_CASE("truncated series and generator residuals scale as g^(N+1)") {
  Setup s;
  XiOptions o;
  o.depth = 2;
  o.record_memory = true;
  std::vector<double> gs = {0.05, 0.1, 0.2};
  for (int N : {2, 3}) {
    std::vector<double> series, generator;
    for (double g : gs) {
      FamilyOnGrid fam = qubit(s.grid, g);
      TrajectoryState st = evolve_xi(s.path, s.K, fam, s.grid, Mat::Identity(2, 2), o);
      ExpansionSet e = expansion_terms(N, s.path, s.K, fam, s.grid, s.node);
      series.push_back((st.psi[s.node] - resum(e.xi, N)).norm());
      std::vector<Mat> L = L_terms(e.d, e.xi);
      Mat lhs = -kI * st.memory[s.node];
      generator.push_back((lhs - resum_generator(L, N) * st.psi[s.node]).norm());
    }
    CHECK(loglog_slope(gs, series) == doctest::Approx(N + 1).epsilon(0.3 / (N + 1)));
    CHECK(loglog_slope(gs, generator) == doctest::Approx(N + 1).epsilon(0.3 / (N + 1)));
  }
}

TEST_CASE("inverse terms invert the series order by order") {
  Setup s;
  std::vector<double> gs = {0.05, 0.1, 0.2}, res;
  const int N = 3;
  for (double g : gs) {
    ExpansionSet e = expansion_terms(N, s.path, s.K, qubit(s.grid, g), s.grid, s.node);
    std::vector<Mat> M = inverse_terms(e.xi);
    res.push_back((resum(M, N) * resum(e.xi, N) - Mat::Identity(2, 2)).norm());
    CHECK(max_abs(M[1] + e.xi[1]) < 1e-15);
    CHECK(max_abs(M[2] - (e.xi[1] * e.xi[1] - e.xi[2])) < 1e-15);
  }
  CHECK(loglog_slope(gs, res) == doctest::Approx(N + 1).epsilon(0.05));
}

TEST_CASE("commuting family truncates the generator at second order") {
  Setup s;
  FamilyOnGrid fam = qubit(s.grid, 0.6, 0.0);
  ExpansionSet e = expansion_terms(4, s.path, s.K, fam, s.grid, s.node);
  std::vector<Mat> L = L_terms(e.d, e.xi);
  CHECK(max_abs(L[1]) == 0.0);
  CHECK(max_abs(L[2] - e.d[2]) == 0.0);
  CHECK(max_abs(L[3]) < 1e-12);
  CHECK(max_abs(L[4]) < 1e-12);
  Mat expect = Mat::Zero(2, 2);
  for (int j = 0; j < s.node; ++j) expect += -kI * s.grid.dt() * s.K(0, 0, s.node, j) * fam.at(s.node, 0) * fam.at(j, 0);
  CHECK(max_abs(resum_generator(L, 4) - expect) < 1e-12);
}

TEST_CASE("zero kernel leaves no memory terms") {
  Setup s;
  DriftKernel zero = DriftKernel::zero(1, s.grid.nodes());
  FamilyOnGrid fam = qubit(s.grid, 0.5);
  for (int n = 1; n <= 3; ++n) CHECK(max_abs(d_term(n, s.path, zero, fam, s.grid, s.node).value) == 0.0);
  CHECK_THROWS_AS(xi_term(6, s.path, zero, fam, s.grid, s.node), std::invalid_argument);
}
