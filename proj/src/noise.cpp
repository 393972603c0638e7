#include "stochmap/noise.hpp"

#include "stochmap/csv.hpp"
#include "stochmap/parallel.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace stochmap {

namespace {

std::uint64_t splitmix(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

cplx kernel_value(const KernelSpec& k, double t, double s, double dt, bool same_node) {
  switch (k.type) {
    case KernelSpec::Type::Zero: return 0.0;
    case KernelSpec::Type::White: return same_node ? k.amplitude / dt : cplx(0.0);
    case KernelSpec::Type::Exponential:
      return k.amplitude * std::exp(-std::abs(t - s) / k.correlation_time) * std::exp(-kI * k.frequency * (t - s));
    case KernelSpec::Type::Tabulated: break;
  }
  return 0.0;
}

// partner(value) gives the entry at the transposed position (Hermitian or symmetric).
void fill_kernels(Mat& out, const std::map<std::pair<int, int>, KernelSpec>& specs, const TimeGrid& grid, int labels,
                  const std::function<cplx(cplx)>& partner) {
  const int n = grid.nodes();
  for (const auto& [ab, spec] : specs) {
    auto [a, b] = ab;
    if (a < 0 || b < 0 || a >= labels || b >= labels) throw std::invalid_argument("noise kernel label out of range");
    if (a > b) throw std::invalid_argument("noise kernels are specified for label pairs a <= b");
    if (spec.type == KernelSpec::Type::Tabulated) {
      Mat tab = read_kernel_csv(spec.file, labels, n);
      for (int p = 0; p < labels * n; ++p)
        for (int q = 0; q < labels * n; ++q) {
          if (std::isnan(tab(p, q).real())) continue;
          out(p, q) = tab(p, q);
          if (std::isnan(tab(q, p).real())) out(q, p) = partner(tab(p, q));
        }
      continue;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        cplx v = kernel_value(spec, grid.time(i), grid.time(j), grid.dt(), i == j);
        out(a * n + i, b * n + j) = v;
        if (a != b) out(b * n + j, a * n + i) = partner(v);
      }
  }
}

}  // namespace

CounterRng::CounterRng(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t x = master_seed;
  std::uint64_t a = splitmix(x);
  std::uint64_t y = index ^ 0xD1B54A32D192ED03ULL;
  std::uint64_t b = splitmix(y);
  state_ = a ^ (b * 0x9E3779B97F4A7C15ULL);
}

std::uint64_t CounterRng::next() { return splitmix(state_); }

double CounterRng::uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform(), u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double th = 2.0 * M_PI * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

NoisePath NoisePath::scaled(double lambda) const {
  NoisePath p = *this;
  for (auto& v : p.phi) v *= lambda;
  return p;
}

NoiseModel::NoiseModel(TimeGrid grid, int labels, Vec mean, Mat pseudo_covariance, Mat covariance)
    : grid_(grid), labels_(labels), mean_(std::move(mean)), S_(std::move(pseudo_covariance)), A_(std::move(covariance)) {
  const int m = labels_ * grid_.nodes();
  if (mean_.size() != m || S_.rows() != m || S_.cols() != m || A_.rows() != m || A_.cols() != m)
    throw std::invalid_argument("NoiseModel: block sizes do not match labels x nodes");
  double scale = std::max(1.0, A_.cwiseAbs().maxCoeff());
  if ((A_ - A_.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw std::invalid_argument("NoiseModel: covariance A not Hermitian");
  if ((S_ - S_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw std::invalid_argument("NoiseModel: pseudo-covariance S not symmetric");
  A_ = 0.5 * (A_ + A_.adjoint());
  S_ = 0.5 * (S_ + S_.transpose());
  factorize();
}

void NoiseModel::factorize() {
  const int m = labels_ * grid_.nodes();
  Eigen::MatrixXd cxx = 0.5 * (A_ + S_).real();
  Eigen::MatrixXd cyy = 0.5 * (A_ - S_).real();
  Eigen::MatrixXd cxy = 0.5 * (A_ + S_).imag();
  double scale = std::max({cxx.cwiseAbs().maxCoeff(), cyy.cwiseAbs().maxCoeff(), cxy.cwiseAbs().maxCoeff(), 0.0});
  real_only_ = cyy.cwiseAbs().maxCoeff() <= 1e-15 * scale && cxy.cwiseAbs().maxCoeff() <= 1e-15 * scale &&
               mean_.imag().cwiseAbs().maxCoeff() == 0.0;
  Eigen::MatrixXd sigma;
  if (real_only_) {
    sigma = cxx;
  } else {
    sigma.resize(2 * m, 2 * m);
    sigma.topLeftCorner(m, m) = cxx;
    sigma.topRightCorner(m, m) = cxy;
    sigma.bottomLeftCorner(m, m) = cxy.transpose();
    sigma.bottomRightCorner(m, m) = cyy;
  }
  if (scale == 0.0) {
    factor_.resize(sigma.rows(), 0);
    min_eig_ = 0.0;
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const auto& ev = es.eigenvalues();
  min_eig_ = ev.minCoeff();
  double top = std::max(1.0, ev.maxCoeff());
  if (min_eig_ < -1e-10 * top) {
    std::ostringstream msg;
    msg << "real embedding of the noise covariance has eigenvalue " << min_eig_ << " < -1e-10";
    throw NonPositiveCovariance(msg.str());
  }
  std::vector<int> keep;
  for (int k = 0; k < ev.size(); ++k)
    if (ev(k) > 1e-14 * ev.maxCoeff()) keep.push_back(k);
  factor_.resize(sigma.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) factor_.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(ev(keep[c]));
}

NoisePath NoiseModel::sample(std::uint64_t master_seed, std::uint64_t index) const {
  const int m = labels_ * grid_.nodes();
  NoisePath p;
  p.labels = labels_;
  p.nodes = grid_.nodes();
  p.master_seed = master_seed;
  p.index = index;
  p.phi.assign(mean_.data(), mean_.data() + m);
  if (factor_.cols() == 0) return p;
  CounterRng rng(master_seed, index);
  Eigen::VectorXd xi(factor_.cols());
  for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = rng.normal();
  Eigen::VectorXd z = factor_ * xi;
  if (real_only_) {
    for (int q = 0; q < m; ++q) p.phi[q] += z(q);
  } else {
    for (int q = 0; q < m; ++q) p.phi[q] += cplx(z(q), z(m + q));
  }
  return p;
}

NoiseModel build_noise(const NoiseSpec& spec, const TimeGrid& grid) {
  const int n = grid.nodes();
  const int m = spec.labels * n;
  Vec mean = Vec::Zero(m);
  for (int a = 0; a < spec.labels && a < static_cast<int>(spec.mean.size()); ++a) mean.segment(a * n, n).setConstant(spec.mean[a]);
  Mat a_mat = Mat::Zero(m, m), s_mat = Mat::Zero(m, m);
  fill_kernels(a_mat, spec.covariance, grid, spec.labels, [](cplx v) { return std::conj(v); });
  fill_kernels(s_mat, spec.pseudo_covariance, grid, spec.labels, [](cplx v) { return v; });
  return NoiseModel(grid, spec.labels, mean, s_mat, a_mat);
}

NoisePath sample(const NoiseModel& model, std::uint64_t master_seed, std::uint64_t index) {
  return model.sample(master_seed, index);
}

std::vector<NoisePath> sample_ensemble(const NoiseModel& model, std::uint64_t master_seed, int count, int threads) {
  std::vector<NoisePath> out(count);
  parallel_for(count, threads, [&](int k) { out[k] = model.sample(master_seed, static_cast<std::uint64_t>(k)); });
  return out;
}

DriftKernel::DriftKernel(int labels, int nodes, Mat values) : labels_(labels), nodes_(nodes), values_(std::move(values)) {
  if (values_.rows() != labels * nodes || values_.cols() != labels * nodes) throw std::invalid_argument("DriftKernel: size mismatch");
  for (int a = 0; a < labels; ++a)
    for (int b = 0; b < labels; ++b)
      for (int i = 0; i < nodes; ++i)
        for (int j = i + 1; j < nodes; ++j) values_(a * nodes + i, b * nodes + j) = 0.0;
}

DriftKernel DriftKernel::zero(int labels, int nodes) {
  return DriftKernel(labels, nodes, Mat::Zero(labels * nodes, labels * nodes));
}

DriftKernel DriftKernel::scaled(double lambda) const { return DriftKernel(labels_, nodes_, lambda * values_); }

DriftKernel drift_kernel(const NoiseModel& model) {
  const int n = model.nodes(), l = model.labels();
  Mat k = model.A() - model.S();
  for (int a = 0; a < l; ++a)
    for (int b = 0; b < l; ++b)
      for (int i = 0; i < n; ++i) k(a * n + i, b * n + i) *= 0.5;
  return DriftKernel(l, n, k);
}

SecondOrderEstimates empirical_second_order(const std::vector<NoisePath>& paths) {
  if (paths.size() < 2) throw std::invalid_argument("empirical cumulants need at least two paths");
  SecondOrderEstimates e;
  e.labels = paths[0].labels;
  e.nodes = paths[0].nodes;
  e.paths = static_cast<int>(paths.size());
  const int m = e.labels * e.nodes;
  const double n = e.paths;
  Mat x(e.paths, m);
  for (int r = 0; r < e.paths; ++r)
    for (int q = 0; q < m; ++q) x(r, q) = paths[r].phi[q];
  e.mean = x.colwise().mean().transpose();
  x.rowwise() -= e.mean.transpose();
  Eigen::MatrixXd mag2 = x.cwiseAbs2();
  e.mean_se = (mag2.colwise().sum().transpose() / (n - 1.0) / n).cwiseSqrt();
  e.A = x.adjoint() * x / (n - 1.0);
  e.S = x.transpose() * x / (n - 1.0);
  Eigen::MatrixXd fourth = mag2.transpose() * mag2 / n;
  e.A_se = ((fourth - e.A.cwiseAbs2()).cwiseMax(0.0) / n).cwiseSqrt();
  e.S_se = ((fourth - e.S.cwiseAbs2()).cwiseMax(0.0) / n).cwiseSqrt();
  return e;
}

namespace {

cplx cumulant_of(const std::vector<std::vector<cplx>>& v, std::size_t begin, std::size_t end, std::size_t skip_b,
                 std::size_t skip_e) {
  const std::size_t k = v.size();
  double count = 0;
  std::vector<cplx> mean(k, 0.0);
  for (std::size_t r = begin; r < end; ++r) {
    if (r >= skip_b && r < skip_e) continue;
    count += 1;
    for (std::size_t f = 0; f < k; ++f) mean[f] += v[f][r];
  }
  for (auto& m : mean) m /= count;
  if (k == 1) return mean[0];
  auto c = [&](std::size_t f, std::size_t r) { return v[f][r] - mean[f]; };
  if (k == 2) {
    cplx s = 0;
    for (std::size_t r = begin; r < end; ++r)
      if (r < skip_b || r >= skip_e) s += c(0, r) * c(1, r);
    return s / (count - 1.0);
  }
  if (k == 3) {
    cplx s = 0;
    for (std::size_t r = begin; r < end; ++r)
      if (r < skip_b || r >= skip_e) s += c(0, r) * c(1, r) * c(2, r);
    return s / count;
  }
  cplx m4 = 0, m01 = 0, m23 = 0, m02 = 0, m13 = 0, m03 = 0, m12 = 0;
  for (std::size_t r = begin; r < end; ++r) {
    if (r >= skip_b && r < skip_e) continue;
    cplx a = c(0, r), b = c(1, r), cc = c(2, r), d = c(3, r);
    m4 += a * b * cc * d;
    m01 += a * b;
    m23 += cc * d;
    m02 += a * cc;
    m13 += b * d;
    m03 += a * d;
    m12 += b * cc;
  }
  return (m4 - (m01 * m23 + m02 * m13 + m03 * m12) / count) / count;
}

}  // namespace

Estimate empirical_cumulant(const std::vector<NoisePath>& paths, const std::vector<NoiseFactor>& factors) {
  if (paths.size() < 100) throw std::invalid_argument("empirical cumulants need at least 100 paths");
  if (factors.empty() || factors.size() > 4) throw std::invalid_argument("cumulant order must be 1..4");
  std::vector<std::vector<cplx>> v(factors.size(), std::vector<cplx>(paths.size()));
  for (std::size_t f = 0; f < factors.size(); ++f)
    for (std::size_t r = 0; r < paths.size(); ++r) v[f][r] = factors[f].value(paths[r]);
  const std::size_t n = paths.size();
  Estimate e;
  e.value = cumulant_of(v, 0, n, n, n);
  const int groups = 20;
  std::vector<cplx> jk(groups);
  cplx avg = 0;
  for (int g = 0; g < groups; ++g) {
    std::size_t b = n * g / groups, en = n * (g + 1) / groups;
    jk[g] = cumulant_of(v, 0, n, b, en);
    avg += jk[g];
  }
  avg /= static_cast<double>(groups);
  double var = 0;
  for (const auto& x : jk) var += std::norm(x - avg);
  e.stderr_ = std::sqrt(var * (groups - 1.0) / groups);
  return e;
}

SquaredGaussianFamily::SquaredGaussianFamily(NoiseModel base, std::vector<std::vector<cplx>> weights)
    : base_(std::move(base)), weights_(std::move(weights)) {
  if (!base_.real_valued() || base_.mean().cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("squared-Gaussian family needs a real zero-mean base process");
  for (const auto& w : weights_)
    if (static_cast<int>(w.size()) != base_.labels()) throw std::invalid_argument("squared-Gaussian weights size mismatch");
}

NoisePath SquaredGaussianFamily::sample(std::uint64_t master_seed, std::uint64_t index) const {
  NoisePath g = base_.sample(master_seed, index);
  NoisePath p;
  p.labels = labels();
  p.nodes = g.nodes;
  p.master_seed = master_seed;
  p.index = index;
  p.phi.assign(static_cast<std::size_t>(p.labels) * p.nodes, 0.0);
  for (int a = 0; a < p.labels; ++a)
    for (int k = 0; k < base_.labels(); ++k)
      for (int i = 0; i < p.nodes; ++i) {
        double x = g(k, i).real();
        p(a, i) += weights_[a][k] * (x * x - base_cov(k, i, k, i));
      }
  return p;
}

double SquaredGaussianFamily::square_cumulant(const std::vector<std::pair<int, int>>& pts) const {
  const int n = static_cast<int>(pts.size());
  if (n < 2) return 0.0;
  std::vector<int> perm;
  for (int k = 1; k < n; ++k) perm.push_back(k);
  double total = 0.0;
  do {
    double prod = base_cov(pts[0].first, pts[0].second, pts[perm[0]].first, pts[perm[0]].second);
    for (int k = 0; k + 1 < n - 1; ++k)
      prod *= base_cov(pts[perm[k]].first, pts[perm[k]].second, pts[perm[k + 1]].first, pts[perm[k + 1]].second);
    prod *= base_cov(pts[perm.back()].first, pts[perm.back()].second, pts[0].first, pts[0].second);
    total += prod;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::ldexp(total, n - 1);
}

double SquaredGaussianFamily::square_moment(const std::vector<std::pair<int, int>>& pts) const {
  const int n = static_cast<int>(pts.size());
  std::function<double(unsigned)> moment = [&](unsigned mask) -> double {
    if (mask == 0) return 1.0;
    int first = __builtin_ctz(mask);
    unsigned rest = mask & ~(1u << first);
    double total = 0.0;
    for (unsigned sub = rest;; sub = (sub - 1) & rest) {
      unsigned block = sub | (1u << first);
      std::vector<std::pair<int, int>> b;
      for (int k = 0; k < n; ++k)
        if (block & (1u << k)) b.push_back(pts[k]);
      double kb = square_cumulant(b);
      if (kb != 0.0) total += kb * moment(mask & ~block);
      if (sub == 0) break;
    }
    return total;
  };
  return moment((1u << n) - 1);
}

Mat read_kernel_csv(const std::string& file, int labels, int nodes) {
  const int m = labels * nodes;
  Mat out = Mat::Constant(m, m, cplx(std::numeric_limits<double>::quiet_NaN(), 0.0));
  for (const auto& row : read_csv(file)) {
    if (row.size() < 6) throw std::runtime_error(file + ": expected columns i,j,alpha,beta,Re,Im");
    std::size_t pos = 0;
    try {
      (void)std::stod(row[0], &pos);
    } catch (...) {
      continue;  // header
    }
    int i = std::stoi(row[0]), j = std::stoi(row[1]), a = std::stoi(row[2]), b = std::stoi(row[3]);
    if (i < 0 || j < 0 || i >= nodes || j >= nodes || a < 0 || b < 0 || a >= labels || b >= labels)
      throw std::runtime_error(file + ": index out of range");
    out(a * nodes + i, b * nodes + j) = cplx(std::stod(row[4]), std::stod(row[5]));
  }
  return out;
}

}  // namespace stochmap
