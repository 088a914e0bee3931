#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "memsim/crossbar.hpp"

namespace memsim::cs {

/// Measurement setup: y = M x with M (m x n) resident on a tiled crossbar.
/// The array holds M / matrix_scale so every entry fits in [-w_max, w_max];
/// products are rescaled digitally.
struct CsProblem {
  int n = 0;
  int m = 0;
  int sparsity_k = 0;
  double matrix_scale = 1.0;
  TiledMatrix measurement;
};

struct ProblemOptions {
  DeviceParams device = DeviceParams::ideal();
  ProgrammingMode programming = ProgrammingMode::iterative(1e-6, 200);
  int tile_dim = 256;
  double now = 0.0;
};

/// Programs an explicit measurement matrix. Requires 0 < m <= n.
CsProblem make_problem(const Eigen::MatrixXd& measurement, int sparsity_k,
                       const ProblemOptions& opts, Rng& rng);

/// i.i.d. N(0, 1/m) measurement matrix.
Eigen::MatrixXd gaussian_matrix(int m, int n, Rng& rng);

/// Length-n signal with exactly k nonzero N(0, 1) entries at random positions.
Eigen::VectorXd sparse_signal(int n, int k, Rng& rng);

/// One analog pass: y = M x under the configured nonidealities.
Eigen::VectorXd compress(const CsProblem& p, const Eigen::VectorXd& x, Rng& rng);

/// Soft-threshold level theta_t = lambda_t * ||z_t|| / sqrt(m). A schedule
/// shorter than the iteration count repeats its last entry.
struct LambdaSchedule {
  std::vector<double> lambdas{1.5};
  static LambdaSchedule constant(double lambda) { return {{lambda}}; }
  double at(int t) const;
};

struct RecoveryTrace {
  std::vector<Eigen::VectorXd> estimates;
  std::vector<double> nmse_db;  ///< empty unless ground truth was supplied
  int iterations_run = 0;
};

/// Soft-thresholding AMP with Onsager correction. Every M and M^T product
/// goes through the crossbar (2 analog passes per iteration).
/// Throws DivergenceError on a non-finite intermediate.
RecoveryTrace amp_recover(const CsProblem& p, const Eigen::VectorXd& y, int iters,
                          const LambdaSchedule& schedule, Rng& rng,
                          const std::optional<Eigen::VectorXd>& x_true = std::nullopt);

/// Floor reported for an exact reconstruction.
inline constexpr double kNmseFloorDb = -300.0;

/// 10 log10(||x_hat - x_true||^2 / ||x_true||^2), floored at kNmseFloorDb.
double nmse_db(const Eigen::VectorXd& x_true, const Eigen::VectorXd& x_hat);

double soft_threshold(double v, double theta);

}  // namespace memsim::cs
