#pragma once

#include "stochmap/core.hpp"

#include <random>

namespace testutil {

inline stochmap::Mat random_matrix(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  stochmap::Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = stochmap::cplx(n(rng), n(rng));
  return m;
}

inline stochmap::Mat random_hermitian(int d, std::mt19937_64& rng) {
  stochmap::Mat m = random_matrix(d, rng);
  return 0.5 * (m + m.adjoint());
}

inline stochmap::Mat random_density(int d, std::mt19937_64& rng) {
  stochmap::Mat m = random_matrix(d, rng);
  stochmap::Mat rho = m * m.adjoint();
  return rho / rho.trace().real();
}

inline double max_abs(const stochmap::Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testutil
