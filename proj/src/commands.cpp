#include "stochmap/commands.hpp"

#include "stochmap/csv.hpp"
#include "stochmap/cumulants.hpp"
#include "stochmap/expansion.hpp"
#include "stochmap/maps.hpp"
#include "stochmap/parallel.hpp"
#include "stochmap/quadratic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace stochmap {

namespace fs = std::filesystem;

Check& RunReport::expect_le(const std::string& name, double value, double tol, bool physics) {
  checks.push_back({name, value, "<=", tol, value <= tol, physics});
  return checks.back();
}

Check& RunReport::expect_ge(const std::string& name, double value, double tol, bool physics) {
  checks.push_back({name, value, ">=", tol, value >= tol, physics});
  return checks.back();
}

void RunReport::note(const std::string& name, double value) { checks.push_back({name, value, "info", 0.0, true, false}); }

bool RunReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

void RunReport::settle() {
  if (exit_code != kExitOk) return;
  for (const auto& c : checks)
    if (c.physics && !c.pass) exit_code = kExitPhysics;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"noise-sample", "cumulants", "map-build", "unravel",
                                                 "quadratic",    "expand",    "verify"};
  return names;
}

namespace {

struct CommandFailure : std::runtime_error {
  int code;
  CommandFailure(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

// Everything a command may need, built on demand.
class Context {
 public:
  Context(const ScenarioConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts), grid_(cfg.grid()) {
    seed_ = opts.seed_override ? *opts.seed_override : cfg.master_seed;
    family_ = FamilyOnGrid(cfg.family, grid_);
  }

  const ScenarioConfig& cfg() const { return cfg_; }
  const TimeGrid& grid() const { return grid_; }
  const FamilyOnGrid& family() const { return family_; }
  std::uint64_t seed() const { return seed_; }
  int threads() const { return std::max(1, opts_.threads); }
  bool dump() const { return opts_.dump_trajectories || cfg_.dump_trajectories; }

  bool has_environment() const { return cfg_.environment.has_value(); }
  bool has_noise() const { return cfg_.environment.has_value() || cfg_.noise.has_value(); }

  const EnvironmentSpec& env_spec() {
    if (!env_spec_) {
      const auto& e = *cfg_.environment;
      env_spec_ = std::make_unique<EnvironmentSpec>(bosonic_environment(e.modes, e.couplings));
    }
    return *env_spec_;
  }

  std::shared_ptr<const QuantumEnvironment> environment() {
    if (!env_) env_ = std::make_shared<QuantumEnvironment>(env_spec(), grid_);
    return env_;
  }

  // noise used for unravelling: matched to the environment unless only an explicit noise block is given
  const NoiseModel& noise() {
    load_noise();
    return noise_;
  }
  const DriftKernel& kernel() {
    load_noise();
    return kernel_;
  }
  const std::string& noise_origin() {
    load_noise();
    return origin_;
  }

  XiOptions xi_options() const {
    XiOptions o;
    o.depth = cfg_.depth;
    return o;
  }

  EnsembleOptions ensemble_options() const {
    EnsembleOptions o;
    o.n_traj = cfg_.n_traj;
    o.seed = seed_;
    o.threads = threads();
    o.groups = cfg_.groups;
    o.xi = xi_options();
    return o;
  }

  // evenly spread grid nodes for tabulations
  std::vector<int> table_nodes() const {
    const int n = grid_.nodes(), k = std::min(cfg_.node_limit, n);
    std::vector<int> out;
    for (int q = 0; q < k; ++q) out.push_back(k == 1 ? 0 : static_cast<int>(std::lround(q * (n - 1.0) / (k - 1.0))));
    return out;
  }

 private:
  void load_noise() {
    if (loaded_) return;
    if (!has_noise()) throw CommandFailure(kExitConfig, "this command needs an 'environment' or 'noise' block");
    try {
      if (cfg_.environment && (cfg_.match_bath || !cfg_.noise)) {
        BathSplit split = cfg_.match_bath.value_or(BathSplit::Circular);
        MatchedNoise m = match_bath(environment()->correlation(), grid_, cfg_.labels(), split, cfg_.split_scale);
        noise_ = m.model;
        kernel_ = m.kernel;
        origin_ = cfg_.match_bath ? "match_bath" : "match_bath (implicit circular)";
      } else {
        noise_ = build_noise(*cfg_.noise, grid_);
        kernel_ = drift_kernel(noise_);
        origin_ = "noise";
      }
    } catch (const NonPositiveCovariance& e) {
      throw CommandFailure(kExitConfig, std::string("noise covariance is not positive: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw CommandFailure(kExitConfig, std::string("noise: ") + e.what());
    }
    loaded_ = true;
  }

  const ScenarioConfig& cfg_;
  const RunOptions& opts_;
  TimeGrid grid_;
  FamilyOnGrid family_;
  std::uint64_t seed_ = 1;
  std::unique_ptr<EnvironmentSpec> env_spec_;
  std::shared_ptr<QuantumEnvironment> env_;
  bool loaded_ = false;
  NoiseModel noise_;
  DriftKernel kernel_;
  std::string origin_;
};

std::string artifact(RunReport& r, const std::string& dir, const std::string& file) {
  r.artifacts.push_back(file);
  return (fs::path(dir) / file).string();
}

void log_line(const RunOptions& o, const std::string& s) {
  if (o.log) *o.log << s << "\n";
}

std::string sign_string(const std::vector<int>& s) {
  std::string out;
  for (int v : s) out += v > 0 ? '+' : '-';
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? " " : "") + std::to_string(v[k]);
  return out;
}

void write_paths_csv(const std::string& path, const NoiseModel& model, std::uint64_t seed, int count) {
  CsvWriter w(path);
  w.header({"path", "label", "node", "Re", "Im"});
  for (int k = 0; k < count; ++k) {
    NoisePath p = model.sample(seed, k);
    for (int a = 0; a < p.labels; ++a)
      for (int i = 0; i < p.nodes; ++i) {
        w.cell(k).cell(a).cell(i).cell(p(a, i));
        w.end_row();
      }
  }
}

double z_score(cplx diff, double se) {
  if (std::abs(diff) < 1e-13) return 0.0;
  return std::abs(diff) / std::max(se, 1e-300);
}

void cmd_noise_sample(Context& ctx, RunReport& r, const std::string& dir) {
  const NoiseModel& m = ctx.noise();
  const int L = m.labels(), n = m.nodes();
  std::vector<NoisePath> paths = sample_ensemble(m, ctx.seed(), ctx.cfg().n_traj, ctx.threads());
  SecondOrderEstimates est = empirical_second_order(paths);
  double z_mean = 0.0, z_a = 0.0, z_s = 0.0;
  CsvWriter w(artifact(r, dir, "noise_cumulants.csv"));
  w.header({"kind", "a", "i", "b", "j", "target_Re", "target_Im", "estimate_Re", "estimate_Im", "stderr"});
  for (int p = 0; p < L * n; ++p) {
    double z = z_score(est.mean(p) - m.mean()(p), est.mean_se(p));
    z_mean = std::max(z_mean, z);
    w.cell(std::string("mean")).cell(p / n).cell(p % n).cell(0).cell(0).cell(m.mean()(p)).cell(est.mean(p)).cell(est.mean_se(p));
    w.end_row();
  }
  for (int p = 0; p < L * n; ++p)
    for (int q = 0; q <= p; ++q) {
      z_a = std::max(z_a, z_score(est.A(p, q) - m.A()(p, q), est.A_se(p, q)));
      z_s = std::max(z_s, z_score(est.S(p, q) - m.S()(p, q), est.S_se(p, q)));
      w.cell(std::string("A")).cell(p / n).cell(p % n).cell(q / n).cell(q % n).cell(m.A()(p, q)).cell(est.A(p, q)).cell(est.A_se(p, q));
      w.end_row();
      w.cell(std::string("S")).cell(p / n).cell(p % n).cell(q / n).cell(q % n).cell(m.S()(p, q)).cell(est.S(p, q)).cell(est.S_se(p, q));
      w.end_row();
    }
  r.expect_le("mean_max_z", z_mean, 5.0);
  r.expect_le("covariance_max_z", z_a, 5.0);
  r.expect_le("pseudo_covariance_max_z", z_s, 5.0);

  // third cumulants of a Gaussian model vanish
  double z3 = 0.0;
  CsvWriter w3(artifact(r, dir, "noise_third_cumulants.csv"));
  w3.header({"i", "j", "k", "estimate_Re", "estimate_Im", "stderr"});
  std::vector<int> nodes = ctx.table_nodes();
  for (std::size_t x = 0; x < nodes.size(); ++x)
    for (std::size_t y = 0; y <= x; ++y)
      for (std::size_t u = 0; u <= y; ++u) {
        std::vector<NoiseFactor> f = {{0, nodes[x], 1.0, 0.0}, {0, nodes[y], 1.0, 0.0}, {0, nodes[u], 0.0, 1.0}};
        Estimate e = empirical_cumulant(paths, f);
        z3 = std::max(z3, z_score(e.value, e.stderr_));
        w3.cell(nodes[x]).cell(nodes[y]).cell(nodes[u]).cell(e.value).cell(e.stderr_);
        w3.end_row();
      }
  r.expect_le("third_cumulant_max_z", z3, 5.0);
  if (ctx.dump()) write_paths_csv(artifact(r, dir, "paths.csv"), m, ctx.seed(), std::min(ctx.cfg().dump_count, ctx.cfg().n_traj));
}

std::unique_ptr<CumulantSource> cumulant_source(Context& ctx) {
  const int order = ctx.cfg().cumulant_order;
  if (ctx.has_environment()) {
    if (order <= 2) return std::make_unique<QuantumGaussianCumulants>(gaussian_environment_cumulants(*ctx.environment()));
    return environment_cumulants(ctx.environment(), order);
  }
  return std::make_unique<GaussianStochasticCumulants>(ctx.noise());
}

void cmd_cumulants(Context& ctx, RunReport& r, const std::string& dir) {
  const int order = ctx.cfg().cumulant_order, L = ctx.cfg().labels();
  std::unique_ptr<CumulantSource> src = cumulant_source(ctx);
  std::vector<int> table = ctx.table_nodes();
  const int lim = static_cast<int>(table.size());
  CsvWriter w(artifact(r, dir, "cumulants.csv"));
  w.header({"order", "signs", "labels", "nodes", "Re", "Im"});
  for (int n = 1; n <= order; ++n) {
    for_each_ordered_tuple(n, lim, -1, [&](const std::vector<int>& idx) {
      std::vector<int> nodes(n);
      for (int k = 0; k < n; ++k) nodes[k] = table[idx[k]];
      for (int sm = 0; sm < (1 << n); ++sm) {
        std::vector<int> signs(n);
        for (int k = 0; k < n; ++k) signs[k] = (sm >> k) & 1 ? -1 : 1;
        int combos = 1;
        for (int k = 0; k < n; ++k) combos *= L;
        for (int lm = 0; lm < combos; ++lm) {
          std::vector<int> labels(n);
          for (int k = 0, v = lm; k < n; ++k, v /= L) labels[k] = v % L;
          w.cell(n).cell(sign_string(signs)).cell(join(labels)).cell(join(nodes)).cell(src->cumulant(signs, labels, nodes));
          w.end_row();
        }
      }
    });
  }
  r.note("source_is_environment", ctx.has_environment() ? 1.0 : 0.0);
  if (ctx.has_noise()) {
    GaussianStochasticCumulants stoch(ctx.noise());
    TpConditionReport tp = tp_condition_check(stoch, 2, lim);
    r.note("tp_condition_max_abs", tp.max_abs);
    r.note("noise_is_trace_preserving_without_kernel", tp.tp() ? 1.0 : 0.0);
  }
  std::vector<int> lead = {table.back(), table[lim / 2], table.front()};
  for (int n = 2; n <= std::min(order, 3); ++n) {
    std::vector<int> nodes(lead.begin(), lead.begin() + n);
    SolvabilityReport s = solvability_appB(n, *src, std::vector<int>(n, 0), nodes);
    r.note("decomposition_residual_order_" + std::to_string(n), s.residual);
    r.note("decomposition_solvable_order_" + std::to_string(n), s.solvable ? 1.0 : 0.0);
  }
}

MapOnGrid oracle(Context& ctx, RunReport& r) {
  OracleResult o = oracle_map(ctx.cfg().family, ctx.env_spec(), ctx.grid());
  r.note("oracle_substeps", o.substeps);
  r.note("oracle_self_convergence", o.self_convergence);
  if (!o.converged) throw CommandFailure(kExitConvergence, "oracle integrator did not converge under step refinement");
  return o.map;
}

void cmd_map_build(Context& ctx, RunReport& r, const std::string& dir) {
  std::unique_ptr<CumulantSource> src = cumulant_source(ctx);
  MapOnGrid cm = cumulant_map(ctx.cfg().cumulant_order, *src, ctx.family(), ctx.grid());
  write_map_csv(artifact(r, dir, "cumulant_map.csv"), cm);
  MapCptpReport crep = map_cptp_report(cm);
  r.note("cumulant_map_min_choi_eig", crep.min_choi_eig);
  r.note("cumulant_map_trace_defect", crep.max_trace_defect);
  if (ctx.has_environment()) {
    MapOnGrid om = oracle(ctx, r);
    write_map_csv(artifact(r, dir, "oracle_map.csv"), om);
    MapCptpReport rep = map_cptp_report(om);
    r.expect_ge("oracle_min_choi_eig", rep.min_choi_eig, -1e-8);
    r.expect_le("oracle_trace_defect", rep.max_trace_defect, 1e-8);
    r.note("cumulant_vs_oracle_superop_distance", max_superop_distance(cm, om));
  }
}

double coherence_gamma(const EnvironmentConfig& env, int a, double t) {
  // int_0^t int_0^t Re D(u, s) by composite Simpson on the untruncated bath
  const int m = 200;
  const double h = t / m;
  double sum = 0.0;
  for (int p = 0; p <= m; ++p) {
    double wp = (p == 0 || p == m) ? 1 : (p % 2 ? 4 : 2);
    for (int q = 0; q <= m; ++q) {
      double wq = (q == 0 || q == m) ? 1 : (q % 2 ? 4 : 2);
      sum += wp * wq * bosonic_correlation(env.modes, env.couplings, a, a, p * h, q * h).real();
    }
  }
  return sum * h * h / 9.0;
}

void dephasing_check(Context& ctx, RunReport& r, const EnsembleAverage& avg, const std::string& dir) {
  const ScenarioConfig& cfg = ctx.cfg();
  if (!cfg.environment) throw CommandFailure(kExitConfig, "dephasing check needs an 'environment' block");
  const Mat& h0 = cfg.family.h0();
  if (cfg.labels() != 1 || cfg.family.dim() < 2) throw CommandFailure(kExitConfig, "dephasing check needs one coupling operator");
  const Mat& f = cfg.family.op(0);
  Mat off_f = f, off_h = h0;
  off_f.diagonal().setZero();
  off_h.diagonal().setZero();
  if (off_f.cwiseAbs().maxCoeff() > 1e-14 || off_h.cwiseAbs().maxCoeff() > 1e-14)
    throw CommandFailure(kExitConfig, "dephasing check needs H0 and the coupling diagonal in the basis");
  cplx c0 = cfg.psi0(0) * std::conj(cfg.psi0(1));
  if (std::abs(c0) < 1e-6) throw CommandFailure(kExitConfig, "dephasing check needs an initial coherence between levels 0 and 1");
  const double gap = std::abs(f(0, 0) - f(1, 1));
  CsvWriter w(artifact(r, dir, "dephasing.csv"));
  w.header({"node", "t", "coherence", "closed_form", "stderr"});
  double worst = 0.0, gamma_max = 0.0;
  for (int i = 0; i < avg.nodes(); ++i) {
    const double t = ctx.grid().time(i);
    double gamma = 0.5 * gap * gap * coherence_gamma(*cfg.environment, 0, t);
    gamma_max = std::max(gamma_max, gamma);
    double exact = std::exp(-gamma);
    double got = std::abs(avg.mean[i](0, 1) / c0);
    double se = avg.stderr_of(i, [](const Mat& x) { return x(0, 1); }) / std::abs(c0);
    worst = std::max(worst, std::abs(got - exact) / exact);
    w.cell(i).cell(t).cell(got).cell(exact).cell(se);
    w.end_row();
  }
  r.note("dephasing_gamma_max", gamma_max);
  r.expect_le("dephasing_max_relative_error", worst, *cfg.dephasing_tolerance);
}

double mc_trace_error(const EnsembleAverage& avg, int node, int d) {
  Eigen::MatrixXd se = avg.entry_stderr(node);
  return 0.5 * std::sqrt(static_cast<double>(d)) * se.norm();
}

void cmd_unravel(Context& ctx, RunReport& r, const std::string& dir) {
  const NoiseModel& m = ctx.noise();
  const DriftKernel& K = ctx.kernel();
  const ScenarioConfig& cfg = ctx.cfg();
  r.note("noise_from_environment", ctx.noise_origin() == "noise" ? 0.0 : 1.0);
  EnsembleAverage avg = density_ensemble(m, K, ctx.family(), ctx.grid(), cfg.psi0, ctx.ensemble_options());
  write_ensemble_csv(artifact(r, dir, "ensemble_density.csv"), avg);
  TraceReport tr = density_trace_report(avg);
  r.note("trajectory_norm_drift", avg.max_drift);
  r.note("trace_defect", tr.max_defect);
  r.expect_le("trace_defect_in_stderr", tr.max_ratio, 3.0);

  if (ctx.has_environment()) {
    MapOnGrid om = oracle(ctx, r);
    MapCptpReport rep = map_cptp_report(om);
    r.expect_ge("oracle_min_choi_eig", rep.min_choi_eig, -1e-8);
    r.expect_le("oracle_trace_defect", rep.max_trace_defect, 1e-8);
    const int d = cfg.family.dim();
    Mat rho0 = cfg.psi0 * cfg.psi0.adjoint();
    CsvWriter w(artifact(r, dir, "oracle_comparison.csv"));
    w.header({"node", "t", "trace_distance", "mc_error", "tolerance"});
    double worst_ratio = 0.0, worst = 0.0;
    for (int i = 0; i < avg.nodes(); ++i) {
      double td = trace_distance(avg.mean[i], om.apply(i, rho0));
      double mc = mc_trace_error(avg, i, d);
      double tol = std::max(3.0 * mc, 0.02);
      worst = std::max(worst, td);
      worst_ratio = std::max(worst_ratio, td / tol);
      w.cell(i).cell(ctx.grid().time(i)).cell(td).cell(mc).cell(tol);
      w.end_row();
    }
    r.note("max_trace_distance_to_oracle", worst);
    r.expect_le("trace_distance_over_tolerance", worst_ratio, 1.0);
  }
  if (cfg.dephasing_tolerance) dephasing_check(ctx, r, avg, dir);

  if (ctx.dump()) {
    XiPropagator prop(K, ctx.family(), ctx.grid(), ctx.xi_options());
    CsvWriter w(artifact(r, dir, "trajectories.csv"));
    w.header({"trajectory", "node", "k", "Re", "Im"});
    Mat psi0 = cfg.psi0;
    for (int k = 0; k < std::min(cfg.dump_count, cfg.n_traj); ++k) {
      TrajectoryState s = prop.evolve(m.sample(ctx.seed(), k), psi0);
      for (int i = 0; i < static_cast<int>(s.psi.size()); ++i)
        for (int q = 0; q < s.dim; ++q) {
          w.cell(k).cell(i).cell(q).cell(s.psi[i](q, 0));
          w.end_row();
        }
    }
  }
}

void cmd_quadratic(Context& ctx, RunReport& r, const std::string& dir) {
  const ScenarioConfig& cfg = ctx.cfg();
  if (!cfg.quadratic) throw CommandFailure(kExitConfig, "quadratic needs system.quadratic = true");
  ContractionKernel c;
  try {
    c = wick_contractions(ctx.family(), cfg.fock_boundary);
  } catch (const NotCNumber& e) {
    throw CommandFailure(kExitConvergence, std::string("NotCNumber: ") + e.what());
  }
  r.note("contraction_max_deviation", c.max_deviation);
  const NoiseModel& m = ctx.noise();
  const DriftKernel& K = ctx.kernel();
  KernelSeries s;
  try {
    s = kernel_recursion(K, c, ctx.grid(), cfg.n_max, cfg.series_eps);
  } catch (const NonConvergent& e) {
    throw CommandFailure(kExitConvergence, std::string("NonConvergent: ") + e.what());
  }
  if (!s.converged) throw CommandFailure(kExitConvergence, "kernel series did not reach its tolerance within n_max orders");
  write_kernel_series_csv(artifact(r, dir, "kernel_series.csv"), s);
  {
    CsvWriter w(artifact(r, dir, "kernel_series_norms.csv"));
    w.header({"order", "sup_norm"});
    for (std::size_t k = 0; k < s.sup_norms.size(); ++k) {
      w.cell(static_cast<int>(k + 1)).cell(s.sup_norms[k]);
      w.end_row();
    }
  }
  r.note("kernel_series_orders", static_cast<double>(s.orders.size()));
  double worst_ratio = 0.0;
  for (std::size_t k = 1; k < s.sup_norms.size(); ++k)
    if (s.sup_norms[k - 1] > 0.0) worst_ratio = std::max(worst_ratio, s.sup_norms[k] / s.sup_norms[k - 1]);
  r.expect_le("kernel_series_worst_ratio", worst_ratio, 1.0);

  XiPropagator nonlocal(K, ctx.family(), ctx.grid(), ctx.xi_options());
  TimeLocalPropagator local(s, c, ctx.family(), ctx.grid());
  const int paths = std::min(cfg.n_traj, 8);
  std::vector<double> fid(paths);
  Mat psi0 = cfg.psi0;
  parallel_for(paths, ctx.threads(), [&](int k) {
    NoisePath p = m.sample(ctx.seed(), k);
    fid[k] = fidelity(nonlocal.evolve(p, psi0).psi.back(), local.evolve(p, psi0).psi.back());
  });
  CsvWriter w(artifact(r, dir, "path_fidelity.csv"));
  w.header({"path", "fidelity"});
  for (int k = 0; k < paths; ++k) {
    w.cell(k).cell(fid[k]);
    w.end_row();
  }
  r.expect_ge("min_path_fidelity", *std::min_element(fid.begin(), fid.end()), 1.0 - 1e-4);

  EnsembleAverage avg = ensemble_average(cfg.n_traj, ctx.threads(), cfg.groups, [&](int k) {
    TrajectoryState st = local.evolve(m.sample(ctx.seed(), k), psi0);
    TrajectorySample out;
    for (const auto& v : st.psi) out.observables.push_back(v * v.adjoint());
    return out;
  });
  write_ensemble_csv(artifact(r, dir, "timelocal_density.csv"), avg);
  r.expect_le("timelocal_trace_defect_in_stderr", density_trace_report(avg).max_ratio, 3.0);
}

void cmd_expand(Context& ctx, RunReport& r, const std::string& dir) {
  const ScenarioConfig& cfg = ctx.cfg();
  const NoiseModel& m = ctx.noise();
  const DriftKernel& K = ctx.kernel();
  const int N = cfg.expand_order, node = ctx.grid().nodes() - 1, d = cfg.family.dim();
  NoisePath path = m.sample(ctx.seed(), 0);
  XiOptions o = ctx.xi_options();
  o.record_memory = true;
  std::vector<std::vector<double>> series(N + 1), generator(N + 1);
  CsvWriter wn(artifact(r, dir, "expansion_norms.csv"));
  wn.header({"scale", "order", "xi", "d", "M", "L"});
  CsvWriter wr(artifact(r, dir, "expansion_residuals.csv"));
  wr.header({"scale", "N", "series_residual", "generator_residual"});
  for (double lam : cfg.expand_scales) {
    FamilyOnGrid fam(cfg.family.scaled(lam), ctx.grid());
    TrajectoryState st = evolve_xi(path, K, fam, ctx.grid(), Mat::Identity(d, d), o);
    ExpansionSet e = expansion_terms(N, path, K, fam, ctx.grid(), node);
    std::vector<Mat> M = inverse_terms(e.xi), L = L_terms(e.d, e.xi);
    for (int n = 0; n <= N; ++n) {
      wn.cell(lam).cell(n).cell(e.xi[n].norm()).cell(e.d[n].norm()).cell(M[n].norm()).cell(L[n].norm());
      wn.end_row();
    }
    Mat lhs = -kI * st.memory[node];
    for (int k = 1; k <= N; ++k) {
      series[k].push_back((st.psi[node] - resum(e.xi, k)).norm());
      generator[k].push_back((lhs - resum_generator(L, k) * st.psi[node]).norm());
      wr.cell(lam).cell(k).cell(series[k].back()).cell(generator[k].back());
      wr.end_row();
    }
  }
  // a residual at round-off level means the series terminates there
  auto slope_check = [&](const std::string& name, const std::vector<double>& y, int expect) {
    double top = *std::max_element(y.begin(), y.end());
    if (top < 1e-11) {
      r.note(name + "_terminates", top);
      return;
    }
    double s = loglog_slope(cfg.expand_scales, y);
    Check& c = r.expect_le(name + "_slope_error", std::abs(s - expect), 0.3, false);
    (void)c;
    r.note(name + "_slope", s);
  };
  for (int k = 2; k <= N; ++k) {
    slope_check("series_N" + std::to_string(k), series[k], k + 1);
    slope_check("generator_N" + std::to_string(k), generator[k], k + 1);
  }
}

}  // namespace

RunReport run_command(const std::string& command, const ScenarioConfig& cfg, const RunOptions& opts,
                      const std::string& out_dir) {
  if (command == "verify") return run_verify(cfg, opts, out_dir);
  RunReport r;
  r.command = command;
  r.scenario = cfg.name;
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end()) {
    r.exit_code = kExitConfig;
    r.message = "unknown command '" + command + "'";
    return r;
  }
  try {
    fs::create_directories(out_dir);
    Context ctx(cfg, opts);
    if (command == "noise-sample")
      cmd_noise_sample(ctx, r, out_dir);
    else if (command == "cumulants")
      cmd_cumulants(ctx, r, out_dir);
    else if (command == "map-build")
      cmd_map_build(ctx, r, out_dir);
    else if (command == "unravel")
      cmd_unravel(ctx, r, out_dir);
    else if (command == "quadratic")
      cmd_quadratic(ctx, r, out_dir);
    else if (command == "expand")
      cmd_expand(ctx, r, out_dir);
  } catch (const CommandFailure& e) {
    r.exit_code = e.code;
    r.message = e.what();
  } catch (const ConfigError& e) {
    r.exit_code = kExitConfig;
    r.message = e.what();
  } catch (const std::invalid_argument& e) {
    r.exit_code = kExitConfig;
    r.message = e.what();
  }
  r.settle();
  if (r.message.empty()) r.message = r.exit_code == kExitOk ? "ok" : "physics check failed";
  log_line(opts, command + ": " + r.message);
  return r;
}

void write_summary(const std::string& path, const RunReport& report) {
  nlohmann::ordered_json j;
  j["command"] = report.command;
  j["scenario"] = report.scenario;
  j["exit_code"] = report.exit_code;
  j["message"] = report.message;
  j["all_pass"] = report.all_pass();
  auto& checks = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : report.checks) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["value"] = format_double(c.value);
    e["relation"] = c.relation;
    e["tolerance"] = format_double(c.tolerance);
    e["pass"] = c.pass;
    checks.push_back(e);
  }
  j["artifacts"] = report.artifacts;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

int run(const std::string& command, const std::string& config_path, const RunOptions& opts) {
  std::ostream& err = opts.log ? *opts.log : std::cerr;
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(config_path);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::string dir = opts.out_dir ? *opts.out_dir : cfg.out_dir;
  if (!opts.out_dir && fs::path(dir).is_relative()) dir = (fs::path(cfg.source_dir) / dir).string();
  RunReport r = run_command(command, cfg, opts, dir);
  if (fs::exists(dir)) write_summary((fs::path(dir) / "summary.json").string(), r);
  for (const auto& c : r.checks)
    err << (c.pass ? "  ok   " : "  FAIL ") << c.name << " = " << format_double(c.value)
        << (c.relation == "info" ? "" : " " + c.relation + " " + format_double(c.tolerance)) << "\n";
  if (r.exit_code != kExitOk) err << "error: " << r.message << "\n";
  return r.exit_code;
}

}  // namespace stochmap
