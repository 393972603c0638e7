#pragma once

#include "stochmap/core.hpp"
#include "stochmap/noise.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace stochmap {

// Blocks of 0-based indices; blocks listed by smallest element.
using SetPartition = std::vector<std::vector<int>>;

// All Bell(n) partitions of {0..n-1} in restricted-growth order, 0 <= n <= 6.
std::vector<SetPartition> partitions(int n);
long bell_number(int n);

// Joint cumulant from moments of sub-multisets; the callback receives positions into the tuple.
using SubsetMoment = std::function<cplx(const std::vector<int>& positions)>;
cplx ursell(int n, const SubsetMoment& moment);
// Inverse direction: moment of the full tuple from cumulants of blocks.
cplx moment_from_cumulants(int n, const SubsetMoment& cumulant);

// theta_{tau_1...tau_n}: 0 unless nodes are weakly decreasing, 1/k! for each run of k equal nodes.
double ordering_weight(const std::vector<int>& nodes);

enum class Provenance { Quantum, Stochastic };

// Ordered cumulants C^{s_1..s_n}_{a_1..a_n}(tau_1..tau_n) with s = +1/-1 the sign on phi
// (s = l-bar). Values include ordering_weight.
class CumulantSource {
 public:
  virtual ~CumulantSource() = default;
  virtual Provenance provenance() const = 0;
  virtual int labels() const = 0;
  // highest order with nonzero cumulants, or a cap for generic sources
  virtual int max_order() const = 0;
  virtual cplx cumulant(const std::vector<int>& signs, const std::vector<int>& labels,
                        const std::vector<int>& nodes) const = 0;
};

// Gaussian stochastic noise: phi^+/2 = Re phi, phi^-/2 = i Im phi.
class GaussianStochasticCumulants : public CumulantSource {
 public:
  explicit GaussianStochasticCumulants(NoiseModel model) : model_(std::move(model)) {}
  Provenance provenance() const override { return Provenance::Stochastic; }
  int labels() const override { return model_.labels(); }
  int max_order() const override { return 2; }
  cplx cumulant(const std::vector<int>& signs, const std::vector<int>& labels,
                const std::vector<int>& nodes) const override;
  const NoiseModel& model() const { return model_; }

 private:
  NoiseModel model_;
};

// Gaussian quantum bath given mean <phi_a(t)> and connected D_ab(t,s) = <phi_a(t) phi_b(s)>_c,
// both on grid nodes, D indexed (a*nodes + i, b*nodes + j).
class QuantumGaussianCumulants : public CumulantSource {
 public:
  QuantumGaussianCumulants(int labels, int nodes, Vec mean, Mat D);
  Provenance provenance() const override { return Provenance::Quantum; }
  int labels() const override { return labels_; }
  int max_order() const override { return 2; }
  cplx cumulant(const std::vector<int>& signs, const std::vector<int>& labels,
                const std::vector<int>& nodes) const override;
  cplx D(int a, int i, int b, int j) const { return D_(a * nodes_ + i, b * nodes_ + j); }

 private:
  int labels_, nodes_;
  Vec mean_;
  Mat D_;
};

// <T prod_p phi^{s_p}_{a_p}(tau_p)/2> for a sub-multiset (nodes in the given order).
using MomentFn = std::function<cplx(const std::vector<int>& signs, const std::vector<int>& labels,
                                    const std::vector<int>& nodes)>;

// Cumulants from an arbitrary moment function through the Ursell formula.
class MomentCumulants : public CumulantSource {
 public:
  MomentCumulants(Provenance prov, int labels, int max_order, MomentFn moment)
      : prov_(prov), labels_(labels), max_order_(max_order), moment_(std::move(moment)) {}
  Provenance provenance() const override { return prov_; }
  int labels() const override { return labels_; }
  int max_order() const override { return max_order_; }
  cplx cumulant(const std::vector<int>& signs, const std::vector<int>& labels,
                const std::vector<int>& nodes) const override;
  const MomentFn& moment() const { return moment_; }

 private:
  Provenance prov_;
  int labels_, max_order_;
  MomentFn moment_;
};

// Moments of the squared-Gaussian family, computed analytically.
MomentFn squared_gaussian_moments(const SquaredGaussianFamily& family);
// Direct cumulants of the squared-Gaussian family (multilinear in the centered squares).
cplx squared_gaussian_cumulant(const SquaredGaussianFamily& family, const std::vector<int>& signs,
                               const std::vector<int>& labels, const std::vector<int>& nodes);
// Isserlis moments for a Gaussian stochastic model.
MomentFn gaussian_stochastic_moments(const NoiseModel& model);

struct SuperopFactor {
  Superop tag;  // Plus or Minus
  int label;
  int node;
};

// coeff * f^{l_1}(tau_1) ... f^{l_n}(tau_n), leftmost factor latest.
struct SuperopString {
  cplx coeff = 1.0;
  std::vector<SuperopFactor> factors;

  Mat apply(const FamilyOnGrid& fam, const Mat& rho) const;
  Mat matrix(const FamilyOnGrid& fam) const;
};

// k_n (stochastic) or k-tilde_n (quantum) at one node tuple, summed over sign arrays and labels.
// Quantum strings keep the leading tag Minus. Exact-zero coefficients are dropped.
std::vector<SuperopString> assemble_k(int n, const CumulantSource& source, const std::vector<int>& nodes);

struct TpConditionReport {
  int order = 0;
  double max_abs = 0.0;  // max |C^{- s_2 .. s_n}|
  std::vector<int> worst_signs, worst_labels, worst_nodes;
  bool tp(double tol = 1e-12) const { return max_abs <= tol; }
};

// Scans all orders <= max_order, labels and weakly decreasing node tuples with entries < node_limit.
TpConditionReport tp_condition_check(const CumulantSource& source, int max_order, int node_limit);

struct SolvabilityReport {
  int order = 0;
  bool solvable = false;
  double residual = 0.0;
  cplx k_even = 0.0;  // coefficient matched by arrays with an even number of '-' among s_2..s_n
  cplx k_odd = 0.0;
  int equations = 0;
};

// Least-squares fit of C^{- s_2..s_n} by two unknowns chosen by the parity of the minus count.
SolvabilityReport solvability_appB(int n, const CumulantSource& source, const std::vector<int>& labels,
                                   const std::vector<int>& nodes, double tol = 1e-10);

// Enumerates weakly decreasing tuples (n entries, each < node_limit, first entry fixed if lead >= 0).
void for_each_ordered_tuple(int n, int node_limit, int lead, const std::function<void(const std::vector<int>&)>& body);

}  // namespace stochmap
