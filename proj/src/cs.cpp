#include "memsim/cs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "memsim/errors.hpp"

namespace memsim::cs {

CsProblem make_problem(const Eigen::MatrixXd& measurement, int sparsity_k,
                       const ProblemOptions& opts, Rng& rng) {
  const int m = static_cast<int>(measurement.rows());
  const int n = static_cast<int>(measurement.cols());
  if (!(m > 0 && m <= n)) throw DomainError("cs: require 0 < m <= n");
  if (sparsity_k < 0 || sparsity_k > n) throw DomainError("cs: sparsity must lie in [0, n]");
  const double peak = measurement.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) throw DomainError("cs: measurement matrix is zero");
  TiledMatrix tm(m, n, opts.tile_dim, opts.device);
  const double scale = peak / tm.w_max();
  tm.program(measurement / scale, opts.programming, opts.now, rng);
  return CsProblem{n, m, sparsity_k, scale, std::move(tm)};
}

Eigen::MatrixXd gaussian_matrix(int m, int n, Rng& rng) {
  Eigen::MatrixXd a(m, n);
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) a(i, j) = sd * standard_normal(rng);
  return a;
}

Eigen::VectorXd sparse_signal(int n, int k, Rng& rng) {
  if (k < 0 || k > n) throw DomainError("sparse_signal: require 0 <= k <= n");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < k; ++i) x[idx[i]] = standard_normal(rng);
  return x;
}

Eigen::VectorXd compress(const CsProblem& p, const Eigen::VectorXd& x, Rng& rng) {
  if (x.size() != p.n)
    throw DimensionError("compress: signal length " + std::to_string(x.size()) + " != n " +
                         std::to_string(p.n));
  return p.matrix_scale * p.measurement.multiply(x, rng);
}

double LambdaSchedule::at(int t) const {
  if (lambdas.empty()) throw DomainError("lambda schedule is empty");
  return lambdas[std::min<std::size_t>(static_cast<std::size_t>(t), lambdas.size() - 1)];
}

double soft_threshold(double v, double theta) {
  if (v > theta) return v - theta;
  if (v < -theta) return v + theta;
  return 0.0;
}

RecoveryTrace amp_recover(const CsProblem& p, const Eigen::VectorXd& y, int iters,
                          const LambdaSchedule& schedule, Rng& rng,
                          const std::optional<Eigen::VectorXd>& x_true) {
  if (y.size() != p.m)
    throw DimensionError("amp_recover: measurement length " + std::to_string(y.size()) +
                         " != m " + std::to_string(p.m));
  if (iters < 1) throw DomainError("amp_recover: iters must be >= 1");
  if (x_true && x_true->size() != p.n) throw DimensionError("amp_recover: ground truth length");

  const double m = static_cast<double>(p.m);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p.n);
  Eigen::VectorXd z_prev = Eigen::VectorXd::Zero(p.m);
  double onsager = 0.0;  // <eta'> / delta from the previous iterate
  RecoveryTrace trace;
  for (int t = 0; t < iters; ++t) {
    const Eigen::VectorXd mx = p.matrix_scale * p.measurement.multiply(x, rng);
    const Eigen::VectorXd z = y - mx + onsager * z_prev;
    const double theta = schedule.at(t) * z.norm() / std::sqrt(m);
    const Eigen::VectorXd pseudo = x + p.matrix_scale * p.measurement.multiply_transpose(z, rng);
    int active = 0;
    for (int i = 0; i < p.n; ++i) {
      x[i] = soft_threshold(pseudo[i], theta);
      if (std::abs(pseudo[i]) > theta) ++active;
    }
    if (!x.allFinite() || !z.allFinite())
      throw DivergenceError("amp_recover: non-finite iterate", t + 1);
    onsager = active / m;
    z_prev = z;
    trace.estimates.push_back(x);
    if (x_true) trace.nmse_db.push_back(nmse_db(*x_true, x));
    trace.iterations_run = t + 1;
  }
  return trace;
}

double nmse_db(const Eigen::VectorXd& x_true, const Eigen::VectorXd& x_hat) {
  if (x_true.size() != x_hat.size()) throw DimensionError("nmse: length mismatch");
  const double denom = x_true.squaredNorm();
  if (!(denom > 0.0)) throw DomainError("nmse: ground truth has zero norm");
  const double ratio = (x_hat - x_true).squaredNorm() / denom;
  if (ratio <= 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

}  // namespace memsim::cs
