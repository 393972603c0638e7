#pragma once

#include "stochmap/core.hpp"
#include "stochmap/noise.hpp"

#include <string>
#include <vector>

namespace stochmap {

// A term of the coupling expansion of Xi at one node; order is the number of f factors it carries.
struct ExpansionTerm {
  int order = 0;
  int node = 0;
  Mat value;
};

// xi_n(t): sum over weakly decreasing node tuples before t (weight 1/c! per run of c equal nodes, dt per factor)
// of f...f times the sum over partial pairings, pairs carrying K and unpaired factors carrying phi.
// Xi(t) = sum_n (-i)^n xi_n(t).
ExpansionTerm xi_term(int n, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                      int node);

// d_{n+1}(t) = f_a(t) sum_{x before t} dt K_{a b}(t, t_x) Xi^(x)_{n-1}(t), with Xi^(x) the expansion of Xi carrying one
// marked factor f_b(t_x). i dXi/dt - f phi Xi = sum_{n>=1} (-i)^n d_{n+1}. Order n + 1.
ExpansionTerm d_term(int n, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family, const TimeGrid& grid,
                     int node);

// M_0 = 1, M_n = -sum_{k<n} M_k xi_{n-k}; input xi_0..xi_N.
std::vector<Mat> inverse_terms(const std::vector<Mat>& xi);

// L_n = d_n - sum_{k=1}^{n-1} L_k xi_{n-k}; d and xi indexed by order (d[0], d[1] unused or zero).
// Returns L_0..L_N with L_0 = L_1 = 0. Generator: i dXi/dt = [f phi + sum_n (-i)^{n-1} L_n] Xi.
std::vector<Mat> L_terms(const std::vector<Mat>& d, const std::vector<Mat>& xi);

// Convenience: xi_0..xi_N and d_0..d_N (by order) at one node.
struct ExpansionSet {
  std::vector<Mat> xi;
  std::vector<Mat> d;
};
ExpansionSet expansion_terms(int N, const NoisePath& path, const DriftKernel& K, const FamilyOnGrid& family,
                             const TimeGrid& grid, int node);

// sum_{n<=N} (-i)^n terms[n]
Mat resum(const std::vector<Mat>& terms, int N);
// sum_{n<=N} (-i)^{n-1} L_n
Mat resum_generator(const std::vector<Mat>& L, int N);

}  // namespace stochmap
