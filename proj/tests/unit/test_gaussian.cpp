#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stochmap/gaussian.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace stochmap;
using testutil::max_abs;

namespace {

// exponential covariance a e^{-|t-s|/tau} e^{-i w (t-s)}, one label
Mat exp_cov(const TimeGrid& g, double a, double tau, double w) {
  const int n = g.nodes();
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dtij = g.time(i) - g.time(j);
      A(i, j) = a * std::exp(-std::abs(dtij) / tau) * std::exp(-kI * w * dtij);
    }
  return A;
}

NoiseModel circular_model(const TimeGrid& g, double a, double tau, double w) {
  const int n = g.nodes();
  return NoiseModel(g, 1, Vec::Zero(n), Mat::Zero(n, n), exp_cov(g, a, tau, w));
}

FamilyOnGrid moving_sigma(const TimeGrid& g, double lambda) {
  // f(t) = lambda e^{i H t} sigma_x e^{-i H t}, H = 0.7 sigma_z + 0.4 sigma_x: not commuting across times
  Mat h = 0.7 * pauli_z() + 0.4 * pauli_x();
  return FamilyOnGrid(OperatorFamily(h, {Mat(lambda * pauli_x())}), g);
}

FamilyOnGrid static_family(const TimeGrid& g, const Mat& f) { return FamilyOnGrid(OperatorFamily(Mat::Zero(2, 2), {f}), g); }

}  // namespace

TEST_CASE("real noise without kernel gives unitary trajectories") {
  TimeGrid g(3.0, 30);
  const int n = g.nodes();
  Mat A = exp_cov(g, 0.3, 0.5, 0.0);
  NoiseModel real(g, 1, Vec::Zero(n), A, A);
  CHECK(real.real_valued());
  FamilyOnGrid fam = moving_sigma(g, 1.0);
  NoisePath p = real.sample(5, 0);
  for (int depth : {0, 1, 2}) {
    XiOptions o;
    o.depth = depth;
    TrajectoryState st = evolve_xi(p, DriftKernel::zero(1, n), fam, g, Mat::Identity(2, 2), o);
    double worst = 0.0;
    for (const Mat& u : st.psi) worst = std::max(worst, max_abs(u.adjoint() * u - Mat::Identity(2, 2)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("evolution is linear in the initial state") {
  TimeGrid g(2.0, 20);
  NoiseModel m = circular_model(g, 0.2, 0.6, 1.0);
  DriftKernel K = drift_kernel(m);
  FamilyOnGrid fam = moving_sigma(g, 1.0);
  NoisePath p = m.sample(3, 7);
  XiOptions o;
  o.depth = 2;
  Mat u = evolve_xi(p, K, fam, g, Mat::Identity(2, 2), o).psi.back();
  Mat v(2, 1);
  v << cplx(0.3, 0.1), cplx(-0.7, 0.2);
  Mat w = evolve_xi(p, K, fam, g, v, o).psi.back();
  CHECK(max_abs(w - u * v) < 1e-13);
}

TEST_CASE("commuting family matches the closed-form exponential at every depth") {
  TimeGrid g(2.0, 25);
  const int n = g.nodes();
  const double dt = g.dt();
  NoiseModel m = circular_model(g, 0.4, 0.7, 1.3);
  DriftKernel K = drift_kernel(m);
  FamilyOnGrid fam = static_family(g, pauli_z());
  NoisePath p = m.sample(11, 2);
  Mat psi0(2, 1);
  psi0 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  for (int depth : {0, 1, 2, 3}) {
    XiOptions o;
    o.depth = depth;
    o.record_memory = true;
    TrajectoryState st = evolve_xi(p, K, fam, g, psi0, o);
    double worst = 0.0, worst_mem = 0.0;
    for (int t = 0; t < n; ++t) {
      cplx noise = 0.0, drift = 0.0, prior = 0.0;
      for (int i = 0; i < t; ++i) {
        noise += dt * p(0, i);
        for (int k = 0; k <= i; ++k) drift += dt * dt * K(0, 0, i, k);
      }
      for (int j = 0; j < t; ++j) prior += dt * K(0, 0, t, j);
      // sigma_z eigenvalues +-1, sigma_z^2 = 1
      Mat xi = Mat::Zero(2, 2);
      xi(0, 0) = std::exp(-kI * noise - drift);
      xi(1, 1) = std::exp(kI * noise - drift);
      Mat expect = xi * psi0;
      worst = std::max(worst, max_abs(st.psi[t] - expect));
      worst_mem = std::max(worst_mem, max_abs(st.memory[t] - prior * expect));
    }
    // depth 0 is the closed form itself; deeper truncations differ only through same-slice products
    CHECK(worst < (depth == 0 ? 1e-12 : 1e-8));
    if (depth == 0) {
      CHECK(worst_mem < 1e-12);
    }
    if (depth == 3) {
      CHECK(worst_mem < 1e-8);
    }
  }
}

TEST_CASE("hierarchy truncation error scales with the expected order") {
  TimeGrid g(2.0, 16);
  NoiseModel m = circular_model(g, 1.0, 0.5, 1.0);
  DriftKernel K = drift_kernel(m);
  NoisePath p = m.sample(4, 1);
  std::vector<double> lam = {0.1, 0.2, 0.4};
  std::vector<std::vector<double>> err(3);
  for (double l : lam) {
    FamilyOnGrid fam = moving_sigma(g, l);
    std::vector<Mat> out;
    for (int depth = 0; depth <= 3; ++depth) {
      XiOptions o;
      o.depth = depth;
      out.push_back(evolve_xi(p, K, fam, g, Mat::Identity(2, 2), o).psi.back());
    }
    for (int depth = 0; depth < 3; ++depth) err[depth].push_back(max_abs(out[depth] - out[3]));
  }
  // depth 0 fails at order 3, depth 1 at order 4, depth 2 at order 6
  CHECK(loglog_slope(lam, err[0]) == doctest::Approx(3.0).epsilon(0.1));
  CHECK(loglog_slope(lam, err[1]) == doctest::Approx(4.0).epsilon(0.1));
  CHECK(loglog_slope(lam, err[2]) > 5.5);
  CHECK(err[2][0] < 1e-8);
}

TEST_CASE("coherence drift converges at second order in the step") {
  // zero path, commuting family: Xi = exp(-sigma_z^2 dt^2 sum K), compared with the continuum double integral
  const double a = 0.5, tau = 0.8, T = 2.0;
  auto continuum = [&]() {
    // int_0^T dt int_0^t ds a e^{-(t-s)/tau} = a tau (T - tau (1 - e^{-T/tau}))
    return a * tau * (T - tau * (1.0 - std::exp(-T / tau)));
  };
  std::vector<double> errs;
  for (int steps : {20, 40, 80}) {
    TimeGrid g(T, steps);
    NoiseModel m = circular_model(g, a, tau, 0.0);
    DriftKernel K = drift_kernel(m);
    NoisePath zero;
    zero.labels = 1;
    zero.nodes = g.nodes();
    zero.phi.assign(g.nodes(), 0.0);
    Mat xi = evolve_xi(zero, K, static_family(g, pauli_z()), g, Mat::Identity(2, 2)).psi.back();
    errs.push_back(std::abs(-std::log(xi(0, 0).real()) - continuum()));
  }
  CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.1));
  CHECK(errs[1] / errs[2] == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("kernel restores trace preservation on average") {
  TimeGrid g(2.0, 20);
  NoiseModel m = circular_model(g, 0.3, 0.5, 1.0);
  FamilyOnGrid fam = static_family(g, pauli_z());
  Vec psi0(2);
  psi0 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  EnsembleOptions o;
  o.n_traj = 4000;
  o.seed = 17;
  EnsembleAverage with = density_ensemble(m, drift_kernel(m), fam, g, psi0, o);
  EnsembleAverage without = density_ensemble(m, DriftKernel::zero(1, g.nodes()), fam, g, psi0, o);
  TraceReport rw = density_trace_report(with), rn = density_trace_report(without);
  CHECK(rw.within(3.0));
  CHECK(rn.max_ratio > 10.0);
  CHECK(without.max_drift > 0.1);

  EnsembleAverage maps = map_ensemble(m, drift_kernel(m), fam, g, o);
  CHECK(map_trace_report(maps, 2).within(3.0));
  // density ensemble and map ensemble share paths
  Mat rho0 = psi0 * psi0.adjoint();
  CHECK(max_abs(apply_map(maps.mean.back(), rho0) - with.mean.back()) < 1e-12);
}

TEST_CASE("ensemble reduction does not depend on the thread count") {
  TimeGrid g(1.0, 10);
  NoiseModel m = circular_model(g, 0.3, 0.5, 1.0);
  FamilyOnGrid fam = moving_sigma(g, 1.0);
  Vec psi0 = Vec::Zero(2);
  psi0(0) = 1.0;
  EnsembleOptions o;
  o.n_traj = 203;
  o.threads = 1;
  EnsembleAverage a = density_ensemble(m, drift_kernel(m), fam, g, psi0, o);
  o.threads = 3;
  EnsembleAverage b = density_ensemble(m, drift_kernel(m), fam, g, psi0, o);
  bool same = true;
  for (int i = 0; i < a.nodes(); ++i) same = same && a.mean[i] == b.mean[i];
  CHECK(same);
  CHECK(a.group_sizes.size() == 20);
}

TEST_CASE("jackknife error of a mean matches the standard error") {
  EnsembleAverage avg = ensemble_average(400, 1, 20, [](int k) {
    TrajectorySample s;
    s.observables.push_back(Mat::Constant(1, 1, std::sin(0.37 * k * k)));
    return s;
  });
  double mean = 0.0, var = 0.0;
  for (int k = 0; k < 400; ++k) mean += std::sin(0.37 * k * k) / 400.0;
  for (int k = 0; k < 400; ++k) var += std::pow(std::sin(0.37 * k * k) - mean, 2) / 399.0;
  CHECK(avg.mean[0](0, 0).real() == doctest::Approx(mean));
  double se = avg.stderr_of(0, [](const Mat& x) { return x(0, 0); });
  CHECK(se == doctest::Approx(std::sqrt(var / 400.0)).epsilon(0.4));
}

TEST_CASE("match_bath splits") {
  const double w = 1.0;
  const double quarter = M_PI / 2.0 / w;
  TimeGrid g(4.0 * quarter, 4);  // t_1 - t_0 = pi / (2 w)
  const int n = g.nodes();
  BathCorrelation bath;
  bath.mean = Vec::Zero(n);
  bath.D = Mat(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) bath.D(i, j) = 0.5 * std::exp(-kI * w * (g.time(i) - g.time(j)));

  MatchedNoise circ = match_bath(bath, g, 1);
  CHECK(std::abs(circ.kernel(0, 0, 1, 0) - cplx(0.0, -0.5)) < 1e-12);
  CHECK(max_abs(circ.model.S()) == 0.0);
  CHECK_THROWS_AS(match_bath(bath, g, 1, BathSplit::RealSymmetric), NonPositiveCovariance);

  BathCorrelation classical = bath;
  classical.D = bath.D.real().cast<cplx>();
  MatchedNoise rs = match_bath(classical, g, 1, BathSplit::RealSymmetric);
  CHECK(rs.kernel.is_zero());
  CHECK(rs.model.real_valued());

  BathCorrelation damped = bath;
  damped.D = exp_cov(g, 0.5, 1.0, w);
  MatchedNoise part = match_bath(damped, g, 1, BathSplit::Scaled, 0.3);
  CHECK(std::abs(part.kernel(0, 0, 2, 0) - (damped.D(2, 0) - 0.3 * damped.D(2, 0).real())) < 1e-12);
  CHECK_THROWS_AS(parse_bath_split("bogus"), std::invalid_argument);
}
