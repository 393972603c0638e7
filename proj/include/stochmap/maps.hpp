#pragma once

#include "stochmap/core.hpp"
#include "stochmap/cumulants.hpp"
#include "stochmap/environment.hpp"

#include <map>
#include <string>
#include <vector>

namespace stochmap {

// Superoperators (row-major vec convention) per grid node; node 0 is the identity.
struct MapOnGrid {
  int dim = 0;
  std::vector<Mat> maps;

  int nodes() const { return static_cast<int>(maps.size()); }
  Mat apply(int node, const Mat& rho) const { return apply_map(maps[node], rho); }
};

struct OracleOptions {
  double tolerance = 1e-7;  // substep doubling stops once the map changes less than this
  int max_substeps = 1 << 12;
};

struct OracleResult {
  MapOnGrid map;
  int substeps = 0;            // Strang substeps per grid step
  double self_convergence = 0;  // max change between the last two refinements
  bool converged = false;
};

// Joint unitary dynamics of system + environment traced back to the system, in the interaction picture.
OracleResult oracle_map(const OperatorFamily& family, const EnvironmentSpec& env, const TimeGrid& grid,
                        const OracleOptions& opts = {});

// T exp[sum_{n<=N} (-i)^n int k_n], one exponential per slice with the leading time at the slice start.
MapOnGrid cumulant_map(int order, const CumulantSource& source, const FamilyOnGrid& family, const TimeGrid& grid);

double tp_defect(const MapOnGrid& map);

struct MapCptpReport {
  double min_choi_eig = 0.0;
  double max_trace_defect = 0.0;
  double max_hermiticity_defect = 0.0;
  bool cptp(double cp_tol, double tp_tol) const { return min_choi_eig >= -cp_tol && max_trace_defect <= tp_tol; }
};
MapCptpReport map_cptp_report(const MapOnGrid& map);

// max over nodes of the Frobenius-induced trace distance of outputs for the given input
double max_output_distance(const MapOnGrid& a, const MapOnGrid& b, const Mat& rho);
double max_superop_distance(const MapOnGrid& a, const MapOnGrid& b);

// Columns node, i, j, k, l, Re, Im; entry (i, j) of the output for input matrix unit E_kl.
void write_map_csv(const std::string& path, const MapOnGrid& map);
MapOnGrid read_map_csv(const std::string& path);

// A_n(nodes) = (-i)^{n+1} sum f_{a1}(t1) <f^{l2}_{a2}(t2) ... <f^{ln}_{an}(tn) C^{- s2..sn}, s = -l,
// with <f^{+-} acting from the right: X <f^{+-} = X f +- f X.
Mat tp_correction_operator(int n, const CumulantSource& source, const FamilyOnGrid& family, const std::vector<int>& nodes);

struct TPCorrection {
  int order = 0;
  std::map<std::vector<int>, Mat> ops;  // keyed by ordered node tuple
  double max_antihermiticity_defect = 0.0;
};

// Tabulates A_n over all ordered tuples with entries below node_limit.
TPCorrection build_tp_correction(int n, const CumulantSource& source, const FamilyOnGrid& family, int node_limit);

}  // namespace stochmap
